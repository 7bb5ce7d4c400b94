#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "ranger/assignment.hpp"

using namespace ranger;

namespace {

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& row_to_col) {
  double s = 0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i)
    s += cost[i][row_to_col[i]];
  return s;
}

double brute_force_best(const std::vector<std::vector<double>>& cost) {
  const int n = int(cost.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (int i = 0; i < n; ++i) s += cost[i][perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("the assignment matches exhaustive search on random matrices") {
  std::mt19937 rng(17);
  std::uniform_int_distribution<int> size_d(1, 6);
  std::uniform_real_distribution<double> cost_d(0, 100);
  std::bernoulli_distribution forbid(0.2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size_d(rng);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (auto& c : row) c = forbid(rng) ? 1e9 : cost_d(rng);
    const auto a = min_cost_assignment(cost);
    // a is a permutation
    std::vector<bool> seen(n, false);
    for (int c : a) {
      REQUIRE(c >= 0);
      REQUIRE(c < n);
      REQUIRE(!seen[c]);
      seen[c] = true;
    }
    REQUIRE(assignment_cost(cost, a) == Catch::Approx(brute_force_best(cost)).epsilon(1e-12));
  }
}

TEST_CASE("a forced diagonal is found exactly") {
  const std::vector<std::vector<double>> cost{
      {1, 1e9, 1e9}, {1e9, 2, 1e9}, {1e9, 1e9, 3}};
  const auto a = min_cost_assignment(cost);
  REQUIRE(a == std::vector<int>{0, 1, 2});
}

TEST_CASE("an anti-diagonal optimum is preferred over a greedy row pick") {
  // row-greedy would take (0,0)=1 then force (1,1)=100; optimal crosses
  const std::vector<std::vector<double>> cost{{1, 2}, {3, 100}};
  const auto a = min_cost_assignment(cost);
  REQUIRE(a == std::vector<int>{1, 0});
  REQUIRE(assignment_cost(cost, a) == 5.0);
}

TEST_CASE("degenerate inputs are handled") {
  REQUIRE(min_cost_assignment({}).empty());
  REQUIRE(min_cost_assignment({{7.0}}) == std::vector<int>{0});
  REQUIRE_THROWS_AS(min_cost_assignment({{1.0, 2.0}, {3.0}}),
                    std::invalid_argument);
}
