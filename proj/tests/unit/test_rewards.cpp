#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hetpref/error.hpp"
#include "hetpref/rewards.hpp"
#include "hetpref/simulate.hpp"

using namespace hetpref;
using hetpref::testing::catalog_of;

namespace {

// one prompt, rows are the given feature vectors
Catalog single_prompt(std::initializer_list<std::initializer_list<double>> rows) {
  const auto d = static_cast<Eigen::Index>(rows.begin()->size());
  Matrix f(static_cast<Eigen::Index>(rows.size()), d);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) f(i, j++) = v;
    ++i;
  }
  return catalog_of({f});
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Reward, UnitTraitPicksTheCoefficient) {
  const Catalog c = single_prompt({{1, 0, 0, 0, 0}, {0, 1, 0, 0, 0}});
  EXPECT_DOUBLE_EQ(reward(c, vec({3, 0, 2, 0, -2.5}), 0, 0), 3.0);
  EXPECT_DOUBLE_EQ(reward(c, vec({3, 0, 2, 0, -2.5}), "p0", "r0"), 3.0);
}

TEST(Reward, ZeroAndOrthogonal) {
  const Catalog c = single_prompt({{0.5, -0.25}, {1, 1}});
  EXPECT_EQ(reward(c, Vector::Zero(2), 0, 1), 0.0);
  EXPECT_EQ(reward(c, vec({1, 2}), 0, 0), 0.0);
}

TEST(Reward, UnknownIdsThrowLookupError) {
  const Catalog c = single_prompt({{1}, {2}});
  EXPECT_THROW(reward(c, vec({1}), "nope", "r0"), LookupError);
  EXPECT_THROW(reward(c, vec({1}), "p0", "r9"), LookupError);
  EXPECT_THROW(reward(c, vec({1}), 0, 5), LookupError);
}

TEST(PairwiseProb, Examples) {
  const Catalog same = single_prompt({{1}, {1}});
  EXPECT_DOUBLE_EQ(pairwise_prob(same, vec({2}), 0, 0, 1), 0.5);
  const Catalog c = single_prompt({{std::log(3.0)}, {0}});
  EXPECT_NEAR(pairwise_prob(c, vec({1}), 0, 0, 1), 0.75, 1e-15);
  EXPECT_NEAR(pairwise_prob(c, vec({1}), 0, 1, 0), 0.25, 1e-15);
  EXPECT_THROW(pairwise_prob(c, vec({1}), 0, 1, 1), InvalidPairError);
}

TEST(ChoiceProb, Examples) {
  const Catalog same = single_prompt({{1}, {1}, {1}});
  const std::vector<std::size_t> all = {0, 1, 2};
  EXPECT_NEAR(choice_prob(same, vec({0.7}), 0, all, 1), 1.0 / 3.0, 1e-15);

  const Catalog c = single_prompt({{std::log(2.0)}, {0}, {0}});
  EXPECT_NEAR(choice_prob(c, vec({1}), 0, all, 0), 0.5, 1e-15);

  const std::vector<std::size_t> pair = {0, 1};
  EXPECT_NEAR(choice_prob(c, vec({1.3}), 0, pair, 0), pairwise_prob(c, vec({1.3}), 0, 0, 1), 1e-15);

  const std::vector<std::size_t> without = {1, 2};
  EXPECT_THROW(choice_prob(c, vec({1}), 0, without, 0), InvalidChoiceError);
  const std::vector<std::size_t> repeated = {1, 1};
  EXPECT_THROW(choice_prob(c, vec({1}), 0, repeated, 1), InvalidChoiceError);
}

TEST(MixtureChoiceProb, SingleTypeEqualsChoiceProb) {
  const Catalog c = single_prompt({{0.3}, {-1}, {2}});
  Population pop;
  pop.types = {{0, vec({0.8}), 1.0}};
  const std::vector<std::size_t> all = {0, 1, 2};
  EXPECT_DOUBLE_EQ(mixture_choice_prob(c, pop, 0, all, 2), choice_prob(c, vec({0.8}), 0, all, 2));
}

TEST(MixtureChoiceProb, AdversarialPairIsFlatOnPairs) {
  const Catalog c = single_prompt({{0.3, 1}, {-1, 0.2}, {2, -3}, {0, 0}});
  const Population pop = make_adversarial_pair(vec({1.7, -0.4}));
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      if (a == b) continue;
      const std::vector<std::size_t> set = {a, b};
      EXPECT_NEAR(mixture_choice_prob(c, pop, 0, set, a), 0.5, 1e-12);
    }
  }
}

TEST(MixtureChoiceProb, AdversarialTernaryFirstItem) {
  // rewards (ln 2, 0, 0) under theta and (-ln 2, 0, 0) under -theta:
  // 1/2 * 2/4 + 1/2 * (1/2)/(5/2) = 0.25 + 0.1
  const Catalog c = single_prompt({{std::log(2.0)}, {0}, {0}});
  const Population pop = make_adversarial_pair(vec({1}));
  const std::vector<std::size_t> all = {0, 1, 2};
  EXPECT_NEAR(mixture_choice_prob(c, pop, 0, all, 0), 0.35, 1e-15);
}

TEST(Catalog, RejectsMalformedInput) {
  Prompt p{"x", {"a"}, Matrix::Zero(1, 2)};
  EXPECT_THROW(Catalog(2, {p}), InputError);
  Prompt dup{"x", {"a", "a"}, Matrix::Zero(2, 2)};
  EXPECT_THROW(Catalog(2, {dup}), InputError);
  Prompt shape{"x", {"a", "b"}, Matrix::Zero(2, 3)};
  EXPECT_THROW(Catalog(2, {shape}), InputError);
}

TEST(Catalog, JsonRoundTripKeepsHash) {
  const Catalog c = single_prompt({{0.1, 2}, {-3, 0.25}, {1e-3, 7}});
  const Catalog back = catalog_from_json(nlohmann::json::parse(catalog_to_json(c).dump()));
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.prompt(0).features, c.prompt(0).features);
  EXPECT_EQ(back.response_index(0, "r2"), 2u);
}

TEST(Catalog, HashDependsOnFeatures) {
  const Catalog a = single_prompt({{0.1}, {0.2}});
  const Catalog b = single_prompt({{0.1}, {0.3}});
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Population, ValidateChecksSimplexAndShape) {
  Population pop;
  pop.types = {{0, vec({1}), 0.6}, {1, vec({2}), 0.5}};
  EXPECT_THROW(pop.validate(1), InputError);
  pop.types[1].eta = 0.4;
  EXPECT_NO_THROW(pop.validate(1));
  EXPECT_THROW(pop.validate(2), InputError);
  EXPECT_THROW(Population{}.validate(1), InputError);
}
