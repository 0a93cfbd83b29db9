#include "empathy/alignment.hpp"
#include "empathy/errors.hpp"
#include "empathy/knowledge.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace empathy;
using ag::Matrix;
using ag::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix random_distribution(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix p(1, n);
  for (int i = 0; i < n; ++i) p(0, i) = u(rng) + 1e-3;
  return p / p.sum();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

nn::Linear make_linear(int in, int out, std::uint64_t seed) {
  nn::ParameterSet params;
  nn::Rng rng(seed);
  auto l = nn::Linear::create(params, "lin", in, out, rng);
  l.bias.mutable_value() = random_matrix(1, out, seed + 1, 0.3);
  return l;
}

// f(a, b) = sigma(a W b^T) by explicit loops.
double score(const Matrix& a, const Matrix& b, const Matrix& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) total += a(0, i) * w(i, j) * b(0, j);
  }
  return sigmoid(total);
}

void expect_gradients(const std::vector<std::pair<std::string, Var>>& params, const std::function<Var()>& loss) {
  const auto check = oracle::check_gradients(params, loss, 25, 5);
  EXPECT_GT(check.probes, 0);
  EXPECT_LT(check.max_rel_error, 1e-3) << check.worst;
}

}  // namespace

TEST(Prior, IdenticalKnowledgeGivesUniform) {
  const auto phi = make_linear(6, 6, 1);
  Matrix k(4, 6);
  for (int i = 0; i < 4; ++i) k.row(i) = random_matrix(1, 6, 2);
  const Matrix p = prior_distribution(Var::constant(k), Var::constant(random_matrix(1, 6, 3)), phi).value();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(0, i), 0.25, 1e-12);
}

TEST(Prior, MatchesBruteForceSoftmaxOverSixtyVectors) {
  const auto phi = make_linear(8, 8, 4);
  const Matrix k = random_matrix(60, 8, 5);
  const Matrix s = random_matrix(1, 8, 6);
  const Matrix p = prior_distribution(Var::constant(k), Var::constant(s), phi).value();
  ASSERT_EQ(p.cols(), 60);
  EXPECT_NEAR(p.sum(), 1.0, 1e-6);

  const Matrix& w = phi.weight.value();
  std::vector<double> query(8);
  for (int c = 0; c < 8; ++c) {
    double z = phi.bias.value()(0, c);
    for (int r = 0; r < 8; ++r) z += s(0, r) * w(r, c);
    query[static_cast<std::size_t>(c)] = std::tanh(z);
  }
  std::vector<double> logits;
  for (int i = 0; i < 60; ++i) {
    double dot = 0.0;
    for (int c = 0; c < 8; ++c) dot += k(i, c) * query[static_cast<std::size_t>(c)];
    logits.push_back(dot);
  }
  const auto expected = oracle::softmax(logits);
  for (int i = 0; i < 60; ++i) EXPECT_NEAR(p(0, i), expected[static_cast<std::size_t>(i)], 1e-6);
}

TEST(Prior, RaisingOneLogitRaisesItsProbability) {
  const auto phi = make_linear(5, 5, 7);
  Matrix k = random_matrix(6, 5, 8);
  const Matrix s = random_matrix(1, 5, 9);
  const Matrix before = prior_distribution(Var::constant(k), Var::constant(s), phi).value();
  const Matrix query = ag::tanh(phi(Var::constant(s))).value();
  k.row(2) += 0.5 * query;
  const Matrix after = prior_distribution(Var::constant(k), Var::constant(s), phi).value();
  EXPECT_GT(after(0, 2), before(0, 2));
}

TEST(Prior, RejectsEmptyKnowledge) {
  const auto phi = make_linear(4, 4, 10);
  EXPECT_THROW(prior_distribution(Var::constant(Matrix(0, 4)), Var::constant(random_matrix(1, 4, 1)), phi),
               ShapeError);
}

TEST(Posterior, RawDotProductSoftmaxTrainOnly) {
  const Matrix k = random_matrix(5, 4, 11);
  const Matrix s = random_matrix(1, 4, 12);
  const Matrix p = posterior_distribution(Var::constant(k), Var::constant(s), Mode::kTrain).value();
  std::vector<double> logits;
  for (int i = 0; i < 5; ++i) logits.push_back(k.row(i).dot(s.row(0)));
  const auto expected = oracle::softmax(logits);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p(0, i), expected[static_cast<std::size_t>(i)], 1e-12);
  EXPECT_THROW(posterior_distribution(Var::constant(k), Var::constant(s), Mode::kInference), ModeError);
}

TEST(Discernment, WeightedSumIsConvexCombination) {
  const Matrix k = random_matrix(3, 4, 13);
  Matrix p(1, 3);
  p << 0.2, 0.5, 0.3;
  const Matrix r = weighted_sum(Var::constant(p), Var::constant(k)).value();
  const Matrix expected = 0.2 * k.row(0) + 0.5 * k.row(1) + 0.3 * k.row(2);
  EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kl, IdentityAndHandExample) {
  std::mt19937_64 rng(14);
  const Matrix p = random_distribution(7, rng);
  EXPECT_NEAR(kl_loss(Var::constant(p), Var::constant(p)).item(), 0.0, 1e-12);
  Matrix post(1, 2);
  post << 1.0, 0.0;
  Matrix prior(1, 2);
  prior << 0.5, 0.5;
  EXPECT_NEAR(kl_loss(Var::constant(post), Var::constant(prior)).item(), std::log(2.0), 1e-12);
}

TEST(Kl, NonNegativeOverRandomPairs) {
  std::mt19937_64 rng(15);
  for (int n = 0; n < 1000; ++n) {
    const int len = 2 + n % 9;
    const Matrix a = random_distribution(len, rng);
    const Matrix b = random_distribution(len, rng);
    EXPECT_GE(kl_loss(Var::constant(a), Var::constant(b)).item(), -1e-12);
  }
}

TEST(Kl, RejectsLengthMismatch) {
  EXPECT_THROW(kl_loss(Var::constant(Matrix::Constant(1, 2, 0.5)), Var::constant(Matrix::Constant(1, 3, 1.0 / 3))),
               ShapeError);
}

TEST(Bow, BagDropsSpecialTokensKeepsDuplicates) {
  const std::vector<int> ids = {Vocabulary::kBos, 7, 8, 7, Vocabulary::kUnk, Vocabulary::kEos, Vocabulary::kPad};
  EXPECT_EQ(response_bag(ids), (std::vector<int>{7, 8, 7}));
}

TEST(Bow, UniformHeadGivesLogVocab) {
  const int v = 37;
  auto head = make_linear(8, v, 16);
  head.weight.mutable_value().setZero();
  head.bias.mutable_value().setZero();
  const std::vector<int> bag = {5, 9, 9, 30};
  const double loss =
      bow_loss(Var::constant(random_matrix(1, 4, 17)), Var::constant(random_matrix(1, 4, 18)), bag, head).item();
  EXPECT_NEAR(loss, std::log(static_cast<double>(v)), 1e-12);
}

TEST(Bow, ConfidentHeadApproachesZero) {
  auto head = make_linear(4, 10, 19);
  head.weight.mutable_value().setZero();
  head.bias.mutable_value().setZero();
  head.bias.mutable_value()(0, 6) = 60.0;
  const std::vector<int> bag = {6};
  EXPECT_LT(bow_loss(Var::constant(random_matrix(1, 2, 1)), Var::constant(random_matrix(1, 2, 2)), bag, head).item(),
            1e-12);
  EXPECT_THROW(bow_loss(Var::constant(random_matrix(1, 2, 1)), Var::constant(random_matrix(1, 2, 2)), {}, head),
               ShapeError);
}

TEST(Bow, MatchesPerTokenAverage) {
  const auto head = make_linear(6, 12, 20);
  const Matrix a = random_matrix(1, 3, 21);
  const Matrix b = random_matrix(1, 3, 22);
  const std::vector<int> bag = {5, 11, 5, 8};
  const double loss = bow_loss(Var::constant(a), Var::constant(b), bag, head).item();

  Matrix joined(1, 6);
  joined << a, b;
  std::vector<double> logits;
  for (int c = 0; c < 12; ++c) {
    double z = head.bias.value()(0, c);
    for (int r = 0; r < 6; ++r) z += joined(0, r) * head.weight.value()(r, c);
    logits.push_back(z);
  }
  const auto p = oracle::softmax(logits);
  double expected = 0.0;
  for (int id : bag) expected -= std::log(p[static_cast<std::size_t>(id)]);
  expected /= static_cast<double>(bag.size());
  EXPECT_NEAR(loss, expected, 1e-6);
}

TEST(Bilinear, ZeroVectorAndIdentityCases) {
  const Matrix w = random_matrix(4, 4, 23);
  EXPECT_DOUBLE_EQ(bilinear_score(Var::constant(Matrix::Zero(1, 4)), Var::constant(random_matrix(1, 4, 1)),
                                  Var::constant(w))
                       .item(),
                   0.5);
  Matrix e(1, 4);
  e << 0, 1, 0, 0;
  EXPECT_NEAR(bilinear_score(Var::constant(e), Var::constant(e), Var::constant(Matrix::Identity(4, 4))).item(),
              0.73106, 1e-5);
  for (int n = 0; n < 50; ++n) {
    const double f = bilinear_score(Var::constant(random_matrix(1, 4, 100 + n)),
                                    Var::constant(random_matrix(1, 4, 200 + n)), Var::constant(w))
                         .item();
    EXPECT_GT(f, 0.0);
    EXPECT_LT(f, 1.0);
  }
}

TEST(CoarseMim, DegenerateNegativesGiveZero) {
  const Var w = Var::constant(random_matrix(5, 5, 24));
  const Var c = Var::constant(random_matrix(1, 5, 25));
  const Var e = Var::constant(random_matrix(1, 5, 26));
  EXPECT_NEAR(coarse_mim_loss(c, e, e, c, w).item(), 0.0, 1e-12);
}

TEST(CoarseMim, WorkedExample) {
  // One-dimensional vectors chosen so f(pos) = 0.9 and both negatives score 0.1.
  const Var w = Var::constant(Matrix::Ones(1, 1));
  const Var c = Var::constant(Matrix::Ones(1, 1));
  const Var e = Var::constant(Matrix::Constant(1, 1, logit(0.9)));
  const Var neg_e = Var::constant(Matrix::Constant(1, 1, logit(0.1)));
  const Var neg_c = Var::constant(Matrix::Constant(1, 1, logit(0.1) / logit(0.9)));
  EXPECT_NEAR(bilinear_score(c, e, w).item(), 0.9, 1e-12);
  EXPECT_NEAR(coarse_mim_loss(c, e, neg_e, neg_c, w).item(), -1.6, 1e-12);
}

TEST(CoarseMim, MatchesDirectFormulaAndRejectsNoNegatives) {
  const Matrix w = random_matrix(4, 4, 27, 0.5);
  const Matrix c = random_matrix(1, 4, 28);
  const Matrix e = random_matrix(1, 4, 29);
  const Matrix ne = random_matrix(3, 4, 30);
  const Matrix nc = random_matrix(2, 4, 31);
  double sum_e = 0.0;
  for (int i = 0; i < 3; ++i) sum_e += std::exp(score(c, ne.row(i), w));
  double sum_c = 0.0;
  for (int i = 0; i < 2; ++i) sum_c += std::exp(score(nc.row(i), e, w));
  const double expected = -(2 * score(c, e, w) - std::log(sum_e) - std::log(sum_c));
  const double got =
      coarse_mim_loss(Var::constant(c), Var::constant(e), Var::constant(ne), Var::constant(nc), Var::constant(w))
          .item();
  EXPECT_NEAR(got, expected, 1e-12);
  EXPECT_THROW(coarse_mim_loss(Var::constant(c), Var::constant(e), Var::constant(Matrix(0, 4)), Var::constant(nc),
                               Var::constant(w)),
               ShapeError);
}

TEST(FineMim, NegativeMasksFollowSources) {
  const std::vector<int> source = {0, 0, 1};
  const auto neg = default_fine_negatives(source, Var::constant(random_matrix(2, 3, 1)),
                                          Var::constant(random_matrix(3, 3, 2)), Var::constant(random_matrix(1, 3, 3)),
                                          Var::constant(random_matrix(2, 3, 4)));
  ASSERT_EQ(neg.er_pool.rows(), 3);
  ASSERT_EQ(neg.cs_pool.rows(), 5);
  EXPECT_FALSE(neg.er_mask(0, 0));
  EXPECT_TRUE(neg.er_mask(0, 1));
  EXPECT_TRUE(neg.er_mask(0, 2));
  EXPECT_TRUE(neg.er_mask(2, 0));
  EXPECT_FALSE(neg.er_mask(2, 1));
  EXPECT_FALSE(neg.cs_mask(0, 0));
  EXPECT_FALSE(neg.cs_mask(0, 1));
  EXPECT_TRUE(neg.cs_mask(0, 2));
  EXPECT_TRUE(neg.cs_mask(0, 3));
  EXPECT_TRUE(neg.cs_mask(2, 0));
  EXPECT_FALSE(neg.cs_mask(2, 2));
}

TEST(FineMim, SixtyPairsDecomposeIntoPerPairTerms) {
  const int t = 2;
  const int l = 5;
  const int d = 6;
  std::vector<int> source;
  for (int i = 0; i <= t; ++i) {
    for (int n = 0; n < 4 * l; ++n) source.push_back(i);
  }
  ASSERT_EQ(source.size(), 60u);
  const Matrix cs = random_matrix(60, d, 32, 0.5);
  const Matrix er = random_matrix(t + 1, d, 33, 0.5);
  const Matrix w = random_matrix(d, d, 34, 0.5);
  const Matrix extra_er = random_matrix(2, d, 35, 0.5);
  const Matrix extra_cs = random_matrix(2, d, 36, 0.5);
  const auto neg = default_fine_negatives(source, Var::constant(er), Var::constant(cs), Var::constant(extra_er),
                                          Var::constant(extra_cs));
  const double got = fine_mim_loss(Var::constant(cs), source, Var::constant(er), neg, Var::constant(w)).item();

  const Matrix& er_pool = neg.er_pool.value();
  const Matrix& cs_pool = neg.cs_pool.value();
  double expected = 0.0;
  for (int k = 0; k < 60; ++k) {
    const int src = source[static_cast<std::size_t>(k)];
    double sum_er = 0.0;
    for (Eigen::Index p = 0; p < er_pool.rows(); ++p) {
      if (neg.er_mask(k, p)) sum_er += std::exp(score(cs.row(k), er_pool.row(p), w));
    }
    double sum_cs = 0.0;
    for (Eigen::Index q = 0; q < cs_pool.rows(); ++q) {
      if (neg.cs_mask(k, q)) sum_cs += std::exp(score(cs_pool.row(q), er.row(src), w));
    }
    expected -= 2 * score(cs.row(k), er.row(src), w) - std::log(sum_er) - std::log(sum_cs);
  }
  EXPECT_NEAR(got, expected, 1e-5);
}

TEST(FineMim, NegativesEqualToPositivesGiveZero) {
  const Matrix c = random_matrix(1, 4, 37);
  const Matrix e = random_matrix(1, 4, 38);
  const std::vector<int> source = {0, 0, 1, 1};
  FineNegatives neg;
  neg.er_pool = Var::constant(e);
  neg.er_mask = ag::BoolMatrix::Constant(4, 1, true);
  neg.cs_pool = Var::constant(c);
  neg.cs_mask = ag::BoolMatrix::Constant(4, 1, true);
  const Var cs = Var::constant(c.replicate(4, 1));
  const Var er = Var::constant(e.replicate(2, 1));
  EXPECT_NEAR(fine_mim_loss(cs, source, er, neg, Var::constant(random_matrix(4, 4, 39))).item(), 0.0, 1e-12);
}

TEST(FineMim, MissingReactionVectorIsAnError) {
  const std::vector<int> source = {0, 3};
  const Var cs = Var::constant(random_matrix(2, 4, 40));
  const Var er = Var::constant(random_matrix(2, 4, 41));
  FineNegatives neg{er, ag::BoolMatrix::Constant(2, 2, true), cs, ag::BoolMatrix::Constant(2, 2, true)};
  EXPECT_THROW(fine_mim_loss(cs, source, er, neg, Var::constant(random_matrix(4, 4, 42))), ShapeError);
}

TEST(AffectGate, ZeroWeightsGiveEvenMix) {
  const Matrix r = random_matrix(1, 5, 43);
  const Matrix e = random_matrix(1, 5, 44);
  const auto s = affect_gate(Var::constant(r), Var::constant(e), Var::constant(Matrix::Zero(10, 1)));
  EXPECT_DOUBLE_EQ(s.mu.item(), 0.5);
  EXPECT_LT((s.r_aff.value() - (r + e) / 2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AffectGate, ConvexCombinationForRandomInputs) {
  for (int n = 0; n < 20; ++n) {
    const Matrix r = random_matrix(1, 5, 300 + n);
    const Matrix e = random_matrix(1, 5, 400 + n);
    const auto s = affect_gate(Var::constant(r), Var::constant(e), Var::constant(random_matrix(10, 1, 500 + n)));
    const double mu = s.mu.item();
    EXPECT_GT(mu, 0.0);
    EXPECT_LT(mu, 1.0);
    EXPECT_LT((s.r_aff.value() - (mu * r + (1 - mu) * e)).cwiseAbs().maxCoeff(), 1e-12);
    const auto same = affect_gate(Var::constant(r), Var::constant(r), Var::constant(random_matrix(10, 1, 600 + n)));
    EXPECT_LT((same.r_aff.value() - r).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Emotion, UniformLogitsGiveLogClassCount) {
  const int classes = 32;
  const Var logits = emotion_logits(Var::constant(random_matrix(1, 6, 45)), Var::constant(Matrix::Zero(6, classes)));
  EXPECT_NEAR(emotion_loss(logits, 3).item(), std::log(32.0), 1e-12);
  EXPECT_THROW(emotion_loss(logits, classes), DataError);
  EXPECT_THROW(emotion_loss(logits, -1), DataError);
}

TEST(Emotion, ProbabilitiesAndArgmaxAgreeWithScan) {
  for (int n = 0; n < 20; ++n) {
    const Matrix r = random_matrix(1, 6, 700 + n);
    const Matrix w = random_matrix(6, 9, 800 + n);
    const Matrix p = emotion_classify(Var::constant(r), Var::constant(w)).value();
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    int best = 0;
    for (int c = 1; c < 9; ++c) {
      if (p(0, c) > p(0, best)) best = c;
    }
    EXPECT_EQ(predict_label(p), best);
    EXPECT_EQ(predict_label(emotion_logits(Var::constant(r), Var::constant(w)).value()), best);
  }
}

TEST(AlignTotal, WeightsFineTermByAlpha) {
  const AlignComponents c{Var::scalar(1.0), Var::scalar(2.0), Var::scalar(3.0), Var::scalar(4.0)};
  EXPECT_NEAR(align_loss_total(c, 0.2).item(), 6.8, 1e-12);
  EXPECT_DOUBLE_EQ(align_loss_total(c, 0.0).item(), 6.0);
  const AlignComponents partial{Var::scalar(1.0), {}, {}, Var::scalar(4.0)};
  EXPECT_NEAR(align_loss_total(partial, 0.5).item(), 3.0, 1e-12);
}

TEST(AlignmentGradients, KlAndBow) {
  Var a = Var::parameter(random_matrix(1, 6, 46));
  Var b = Var::parameter(random_matrix(1, 6, 47));
  expect_gradients({{"a", a}, {"b", b}},
                   [&] { return kl_loss(ag::softmax_rows(a), ag::softmax_rows(b)); });

  auto head = make_linear(8, 10, 48);
  Var rc = Var::parameter(random_matrix(1, 4, 49));
  Var re = Var::parameter(random_matrix(1, 4, 50));
  const std::vector<int> bag = {5, 7, 5};
  expect_gradients({{"rc", rc}, {"re", re}, {"w", head.weight}, {"b", head.bias}},
                   [&] { return bow_loss(rc, re, bag, head); });
}

TEST(AlignmentGradients, CoarseAndFine) {
  Var w = Var::parameter(random_matrix(4, 4, 51, 0.5));
  Var c = Var::parameter(random_matrix(1, 4, 52));
  Var e = Var::parameter(random_matrix(1, 4, 53));
  Var ne = Var::parameter(random_matrix(3, 4, 54));
  Var nc = Var::parameter(random_matrix(3, 4, 55));
  expect_gradients({{"w", w}, {"c", c}, {"e", e}, {"ne", ne}, {"nc", nc}},
                   [&] { return coarse_mim_loss(c, e, ne, nc, w); });

  Var cs = Var::parameter(random_matrix(6, 4, 56));
  Var er = Var::parameter(random_matrix(2, 4, 57));
  Var extra = Var::parameter(random_matrix(1, 4, 58));
  const std::vector<int> source = {0, 0, 0, 1, 1, 1};
  expect_gradients({{"w", w}, {"cs", cs}, {"er", er}, {"extra", extra}}, [&] {
    const auto neg = default_fine_negatives(source, er, cs, extra, extra);
    return fine_mim_loss(cs, source, er, neg, w);
  });
}

TEST(AlignmentGradients, GateAndEmotion) {
  Var r = Var::parameter(random_matrix(1, 4, 59));
  Var e = Var::parameter(random_matrix(1, 4, 60));
  Var wa = Var::parameter(random_matrix(8, 1, 61));
  Var we = Var::parameter(random_matrix(4, 5, 62));
  expect_gradients({{"r", r}, {"e", e}, {"wa", wa}, {"we", we}}, [&] {
    const auto s = affect_gate(r, e, wa);
    return emotion_loss(emotion_logits(s.r_aff, we), 2);
  });
}
