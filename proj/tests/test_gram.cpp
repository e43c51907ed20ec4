#include <doctest.h>

#include "qrrp/gram.hpp"
#include "qrrp/simulate.hpp"

using namespace qrrp;

namespace {

Matrix random_rows(Index k, Index d, std::uint64_t seed) {
  Matrix m(k, d);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < d; ++j)
      m(i, j) = counter_normal(seed, 11, std::uint64_t(i * d + j));
  return m;
}

double rel_frob(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace

TEST_CASE("gram inverse of trivial elbows") {
  Matrix one_row(1, 4);
  one_row << 1, 0, 0, 0;
  auto g = gram_inverse_init(one_row, {0});
  CHECK(g.inv()(0, 0) == doctest::Approx(1.0));

  Matrix two(2, 3);
  two << 1, 0, 0, 0, 2, 0;  // orthogonal rows with norms 1 and 2
  g = gram_inverse_init(two, {0, 1});
  CHECK(g.inv()(0, 0) == doctest::Approx(1.0));
  CHECK(g.inv()(1, 1) == doctest::Approx(0.25));
  CHECK(g.inv()(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("gram inverse matches dense inversion") {
  const Matrix rows = random_rows(4, 6, 3);
  const auto g = gram_inverse_init(rows, {0, 1, 2, 3});
  const Matrix direct = (rows * rows.transpose()).inverse();
  CHECK(rel_frob(g.inv(), direct) <= 1e-10);
}

TEST_CASE("add and remove update the inverse") {
  Matrix two(2, 3);
  two << 1, 0, 0, 0, 2, 0;
  auto g = gram_inverse_init(two, {5, 9});

  SUBCASE("orthogonal unit row extends block-diagonally") {
    Vector unit(3);
    unit << 0, 0, 1;
    auto g2 = gram_inverse_add(g, unit, 7);
    CHECK(g2.inv()(2, 2) == doctest::Approx(1.0));
    CHECK(g2.inv()(0, 2) == doctest::Approx(0.0));
    CHECK(g2.elbow() == std::vector<Index>{5, 9, 7});
  }

  SUBCASE("add then remove recovers the original") {
    Vector row(3);
    row << 0.3, -1.1, 0.7;
    auto g2 = gram_inverse_add(g, row, 7);
    auto g3 = gram_inverse_remove(g2, 2);
    CHECK(rel_frob(g3.inv(), g.inv()) <= 1e-9);
  }

  SUBCASE("removing from a 2-row orthogonal gram") {
    auto g1 = gram_inverse_remove(g, 0);
    CHECK(g1.size() == 1);
    CHECK(g1.inv()(0, 0) == doctest::Approx(0.25));
    CHECK(g1.elbow() == std::vector<Index>{9});
  }

  SUBCASE("remove then re-add round-trips") {
    const Matrix rows = random_rows(6, 8, 12);
    auto big = gram_inverse_init(rows, {0, 1, 2, 3, 4, 5});
    const Vector third = rows.row(3).transpose();
    auto smaller = gram_inverse_remove(big, 3);
    const Matrix fresh = ElbowGramInverse::from_design(rows, smaller.elbow()).inv();
    CHECK(rel_frob(smaller.inv(), fresh) <= 1e-9);
    auto back = gram_inverse_add(smaller, third, 3);
    Matrix reordered(6, 8);
    reordered << rows.row(0), rows.row(1), rows.row(2), rows.row(4),
        rows.row(5), rows.row(3);
    CHECK(rel_frob(back.inv(), (reordered * reordered.transpose()).inverse()) <=
          1e-9);
  }

  SUBCASE("removing the last row is the caller's problem") {
    auto g1 = gram_inverse_remove(g, 0);
    CHECK_THROWS_AS(gram_inverse_remove(g1, 0), Error);
  }
}

TEST_CASE("degenerate elbows are rejected") {
  Matrix rows(2, 3);
  rows << 1, 2, 3, 1, 2, 3;
  CHECK_THROWS_AS(gram_inverse_init(rows, {0, 1}), Error);

  Matrix ok(1, 3);
  ok << 1, 2, 3;
  auto g = gram_inverse_init(ok, {0});
  Vector dup(3);
  dup << 1, 2, 3;
  CHECK_THROWS_AS(g.add_row(dup, 1), Error);
}

TEST_CASE("drift stays bounded over long update sequences") {
  const Index dim = 9;
  const Matrix pool = random_rows(40, dim, 99);
  auto g = gram_inverse_init(pool.topRows(3), {0, 1, 2});
  std::vector<Index> members = {0, 1, 2};
  Index next_case = 3;
  for (int step = 0; step < 50; ++step) {
    const double u = counter_uniform(4, 2, std::uint64_t(step));
    if (g.size() <= 2 || (u < 0.6 && next_case < 40 && g.size() < dim)) {
      g.add_row(pool.row(next_case).transpose(), next_case);
      members.push_back(next_case);
      ++next_case;
    } else {
      const Index pos = Index(u * 1e6) % g.size();
      members.erase(members.begin() + pos);
      g.remove_row(pos);
    }
    Matrix rows(members.size(), dim);
    for (std::size_t i = 0; i < members.size(); ++i)
      rows.row(Index(i)) = pool.row(members[i]);
    CHECK(rel_frob(g.inv(), (rows * rows.transpose()).inverse()) <= 1e-8);
  }
  CHECK(g.self_check() <= 1e-8);
}
