#include <cmath>
#include <random>

#include "doctest.h"
#include "pmesh/error.hpp"
#include "pmesh/heatmap.hpp"

using namespace pmesh;

namespace {

KeypointSet single(double x, double y) {
  KeypointSet k(1);
  k.coords << x, y;
  k.visible(0) = true;
  k.confidence(0) = 1.0;
  return k;
}

}  // namespace

TEST_CASE("peak at a cell center has value one there") {
  HeatmapParams p;
  const auto h = render(single(cell_center(10, p.stride), cell_center(20, p.stride)), p);
  CHECK(h.grid(0)(20, 10) == 1.0);
  CHECK(h.grid(0).maxCoeff() == 1.0);
}

TEST_CASE("cell values follow the analytic gaussian") {
  HeatmapParams p;
  p.sigma = 6.5;
  const int r0 = 30, c0 = 25;
  const auto h = render(single(cell_center(c0, p.stride), cell_center(r0, p.stride)), p);
  for (int dr = -4; dr <= 4; ++dr)
    for (int dc = -4; dc <= 4; ++dc) {
      const double expect = std::exp(-(dr * dr + dc * dc) * p.stride * p.stride / (2 * p.sigma * p.sigma));
      CHECK(std::abs(h.grid(0)(r0 + dr, c0 + dc) - expect) < 1e-12);
    }
}

TEST_CASE("invisible joints render empty and decode invisible") {
  KeypointSet k(2);
  k.coords << 40, 40, 80, 90;
  k.visible(1) = true;
  const auto h = render(k, HeatmapParams{});
  CHECK(h.grid(0).maxCoeff() == 0.0);
  const auto d = decode_argmax(h);
  CHECK_FALSE(d.visible(0));
  CHECK(d.visible(1));
  CHECK_FALSE(decode_soft_argmax(h, 0.1).visible(0));
}

TEST_CASE("render rejects nonpositive sigma") {
  HeatmapParams p;
  p.sigma = 0.0;
  CHECK_THROWS_AS(render(single(1, 1), p), ConfigError);
  CHECK_THROWS_AS(decode_soft_argmax(HeatmapStack(1, 4, 4, 4.0), 0.0), ConfigError);
}

TEST_CASE("argmax decode is exact at cell centers and within half a stride elsewhere") {
  HeatmapParams p;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, p.width * p.stride);
  for (int i = 0; i < 500; ++i) {
    const double x = u(rng), y = u(rng);
    const auto d = decode_argmax(render(single(x, y), p));
    CHECK(std::abs(d.coords(0, 0) - x) <= 0.5 * p.stride);
    CHECK(std::abs(d.coords(0, 1) - y) <= 0.5 * p.stride);
  }
  const auto d = decode_argmax(render(single(cell_center(7, 4.0), cell_center(3, 4.0)), p));
  CHECK(d.coords(0, 0) == cell_center(7, 4.0));
  CHECK(d.coords(0, 1) == cell_center(3, 4.0));
  CHECK(d.confidence(0) == 1.0);
}

TEST_CASE("argmax ties resolve to the first row-major cell") {
  HeatmapStack h(1, 8, 8, 2.0);
  h.grid(0)(5, 1) = 0.7;
  h.grid(0)(2, 6) = 0.7;
  h.grid(0)(2, 7) = 0.7;
  const auto d = decode_argmax(h);
  CHECK(d.coords(0, 0) == cell_center(6, 2.0));
  CHECK(d.coords(0, 1) == cell_center(2, 2.0));
}

TEST_CASE("scaling a grid scales confidence and keeps the location") {
  HeatmapParams p;
  auto h = render(single(101.3, 57.9), p);
  const auto base = decode_argmax(h);
  h.values() *= 0.37;
  const auto scaled = decode_argmax(h);
  CHECK(scaled.confidence(0) == doctest::Approx(0.37 * base.confidence(0)).epsilon(1e-14));
  CHECK(scaled.coords == base.coords);
}

TEST_CASE("soft-argmax recovers subpixel positions") {
  HeatmapParams p;
  std::mt19937_64 rng(2);
  const double margin = 3 * p.sigma;
  std::uniform_real_distribution<double> u(margin, p.width * p.stride - margin);
  for (int i = 0; i < 300; ++i) {
    const double x = u(rng), y = u(rng);
    const auto d = decode_soft_argmax(render(single(x, y), p), 0.1);
    CHECK(std::hypot(d.coords(0, 0) - x, d.coords(0, 1) - y) < 0.1);
  }
}

TEST_CASE("soft-argmax of a uniform grid is the image center") {
  HeatmapStack h(1, 64, 64, 4.0);
  h.values().setConstant(0.25);
  const auto d = decode_soft_argmax(h, 1.0);
  CHECK(d.coords(0, 0) == doctest::Approx(128.0).epsilon(1e-14));
  CHECK(d.coords(0, 1) == doctest::Approx(128.0).epsilon(1e-14));
}

TEST_CASE("soft-argmax is translation equivariant for interior peaks") {
  HeatmapParams p;
  const double x = 97.3, y = 121.8;
  const auto a = decode_soft_argmax(render(single(x, y), p), 0.5);
  for (int k = 1; k <= 5; ++k) {
    const auto b = decode_soft_argmax(render(single(x + k * p.stride, y - k * p.stride), p), 0.5);
    CHECK(std::abs(b.coords(0, 0) - a.coords(0, 0) - k * p.stride) < 1e-6);
    CHECK(std::abs(b.coords(0, 1) - a.coords(0, 1) + k * p.stride) < 1e-6);
  }
}

TEST_CASE("soft-argmax approaches argmax as the temperature falls") {
  HeatmapStack h(1, 16, 16, 4.0);
  h.grid(0)(4, 9) = 1.0;
  h.grid(0)(11, 2) = 0.9;
  const auto hard = decode_argmax(h);
  const auto warm = decode_soft_argmax(h, 1.0);
  const auto cold = decode_soft_argmax(h, 0.005);
  CHECK((cold.coords - hard.coords).norm() < 1e-3);
  CHECK((warm.coords - hard.coords).norm() > 1.0);
}

TEST_CASE("rendered stacks satisfy the heatmap invariants") {
  HeatmapParams p;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 280.0);
  KeypointSet k(12);
  for (int j = 0; j < 12; ++j) {
    k.coords.row(j) << u(rng), u(rng);
    k.visible(j) = true;
  }
  const auto h = render(k, p);
  CHECK_NOTHROW(validate(h));
  CHECK(h.values().maxCoeff() <= 1.0 + 1e-6);
  auto bad = h;
  bad.values()(0, 0) = -1e-3;
  CHECK_THROWS_AS(validate(bad), InvariantError);
}
