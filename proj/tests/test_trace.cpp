#include <catch2/catch_amalgamated.hpp>

#include "wfd/rng.hpp"
#include "wfd/trace.hpp"

using namespace wfd;

namespace {

std::vector<Cell> cells_from_dirs(const std::vector<int>& dirs) {
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < dirs.size(); ++i)
    cells.push_back(Cell{static_cast<double>(i), dirs[i]});
  return cells;
}

std::vector<long long> burst_lengths(const std::vector<Burst>& bursts) {
  std::vector<long long> ls;
  for (const Burst& b : bursts) ls.push_back(b.l);
  return ls;
}

// Discrete IoUT oracle for integer-aligned segments: count shared integer
// indices over union indices.
double iout_discrete(long long sa, long long ea, long long sb, long long eb) {
  long long inter = 0, uni = 0;
  const long long lo = std::min(sa, sb);
  const long long hi = std::max(ea, eb);
  for (long long i = lo; i < hi; ++i) {
    const bool in_a = i >= sa && i < ea;
    const bool in_b = i >= sb && i < eb;
    if (in_a && in_b) ++inter;
    if (in_a || in_b) ++uni;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("bursts_from_cells collapses maximal runs") {
  const auto bursts = bursts_from_cells(cells_from_dirs({+1, +1, -1, -1, -1, +1}));
  CHECK(burst_lengths(bursts) == std::vector<long long>{+2, -3, +1});
  CHECK(bursts[0].t == 0.0);
  CHECK(bursts[1].t == 2.0);
  CHECK(bursts[2].t == 5.0);

  CHECK(burst_lengths(bursts_from_cells(cells_from_dirs({-1, -1, -1, -1}))) ==
        std::vector<long long>{-4});
  CHECK(bursts_from_cells({}).empty());
}

TEST_CASE("bursts_from_cells rejects invalid directions") {
  CHECK_THROWS_AS(bursts_from_cells({Cell{0.0, 2}}), data_error);
  CHECK_THROWS_AS(bursts_from_cells({Cell{0.0, 0}}), data_error);
}

TEST_CASE("burst round trip preserves directions") {
  Rng rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> dirs;
    const int n = 1 + static_cast<int>(rng.uniform_int(200));
    for (int i = 0; i < n; ++i) dirs.push_back(rng.uniform() < 0.5 ? +1 : -1);
    const auto bursts = bursts_from_cells(cells_from_dirs(dirs));
    CHECK(directions_from_bursts(bursts) == dirs);
    for (std::size_t i = 1; i < bursts.size(); ++i)
      CHECK((bursts[i - 1].l > 0) != (bursts[i].l > 0));
    CHECK(cell_count(bursts) == static_cast<long long>(dirs.size()));
  }
}

TEST_CASE("segment bounds round trip") {
  const Segment s = Segment::from_bounds(3.0, 11.0);
  CHECK(s.c == 7.0);
  CHECK(s.l == 8.0);
  CHECK(s.start() == 3.0);
  CHECK(s.end() == 11.0);
}

TEST_CASE("iout basic values") {
  CHECK(iout(Segment::from_bounds(0, 10), Segment::from_bounds(5, 15)) ==
        Catch::Approx(5.0 / 15.0));
  CHECK(iout(Segment::from_bounds(2, 9), Segment::from_bounds(2, 9)) == 1.0);
  CHECK(iout(Segment::from_bounds(0, 5), Segment::from_bounds(6, 10)) == 0.0);
  CHECK_THROWS_AS(iout(Segment{0, 0}, Segment{0, 1}), data_error);
  CHECK_THROWS_AS(iout(Segment{0, 1}, Segment{0, -2}), data_error);
}

TEST_CASE("iout matches the discrete index-counting oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 2000; ++rep) {
    const long long sa = static_cast<long long>(rng.uniform_int(200));
    const long long ea = sa + 1 + static_cast<long long>(rng.uniform_int(100));
    const long long sb = static_cast<long long>(rng.uniform_int(200));
    const long long eb = sb + 1 + static_cast<long long>(rng.uniform_int(100));
    const double fast = iout(Segment::from_bounds(sa, ea), Segment::from_bounds(sb, eb));
    const double slow = iout_discrete(sa, ea, sb, eb);
    CHECK(std::abs(fast - slow) <= 1e-12);
  }
}

TEST_CASE("iout symmetry and identity properties") {
  Rng rng(11);
  for (int rep = 0; rep < 500; ++rep) {
    const Segment a{rng.uniform(0, 100), rng.uniform(0.5, 50)};
    const Segment b{rng.uniform(0, 100), rng.uniform(0.5, 50)};
    const double ab = iout(a, b);
    CHECK(ab == iout(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (a.c == b.c && a.l == b.l)
      CHECK(ab == 1.0);
    else if (ab == 1.0) {
      CHECK(a.start() == Catch::Approx(b.start()));
      CHECK(a.end() == Catch::Approx(b.end()));
    }
  }
}

TEST_CASE("cell_span_to_burst_span containment mapping") {
  const auto bursts = bursts_from_cells(cells_from_dirs({+1, +1, -1, -1, -1, +1}));
  const Segment b1 = cell_span_to_burst_span(Segment::from_bounds(0, 4), bursts);
  CHECK(b1.start() == 0.0);
  CHECK(b1.end() == 2.0);

  const Segment all = cell_span_to_burst_span(Segment::from_bounds(0, 6), bursts);
  CHECK(all.start() == 0.0);
  CHECK(all.end() == 3.0);

  const Segment last = cell_span_to_burst_span(Segment::from_bounds(5, 6), bursts);
  CHECK(last.start() == 2.0);
  CHECK(last.end() == 3.0);

  CHECK_THROWS_AS(cell_span_to_burst_span(Segment::from_bounds(0, 7), bursts), data_error);
  CHECK_THROWS_AS(cell_span_to_burst_span(Segment::from_bounds(3, 3), bursts), data_error);
}

TEST_CASE("cell_span_to_burst_span preserves containment") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> dirs;
    const int n = 10 + static_cast<int>(rng.uniform_int(200));
    for (int i = 0; i < n; ++i) dirs.push_back(rng.uniform() < 0.5 ? +1 : -1);
    const auto bursts = bursts_from_cells(cells_from_dirs(dirs));

    const long long s_out = static_cast<long long>(rng.uniform_int(n - 2));
    const long long e_out = s_out + 2 +
                            static_cast<long long>(rng.uniform_int(n - s_out - 1));
    const long long s_in = s_out + static_cast<long long>(rng.uniform_int(e_out - s_out - 1));
    const long long e_in = s_in + 1 + static_cast<long long>(rng.uniform_int(e_out - s_in - 1));

    const Segment outer =
        cell_span_to_burst_span(Segment::from_bounds(s_out, e_out), bursts);
    const Segment inner =
        cell_span_to_burst_span(Segment::from_bounds(s_in, e_in), bursts);
    CHECK(inner.start() >= outer.start());
    CHECK(inner.end() <= outer.end());
  }
}
