#include "dyntrack/features.hpp"
#include "dyntrack/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dyntrack;

namespace {

// Per-pixel double loop straight from the definition.
Eigen::VectorXd naive_histogram(const Eigen::VectorXd& patch, const TemplateGeometry& g,
                                const KernelSpec& k, int bins, bool soft, double sigma) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(bins);
  double kappa = 0;
  for (int col = 0; col < g.cols; ++col) {
    for (int row = 0; row < g.rows; ++row) {
      const double dx = (col - 0.5 * (g.cols - 1)) / k.half_width;
      const double dy = (row - 0.5 * (g.rows - 1)) / k.half_height;
      const double w = dx * dx + dy * dy < 1 ? 1 - dx * dx - dy * dy : 0;
      kappa += w;
      const double s = patch(col * g.rows + row);
      for (int u = 0; u < bins; ++u) {
        if (soft) {
          const double lo = 1 / (1 + std::exp(-sigma * (s - double(u) / bins)));
          const double hi = 1 / (1 + std::exp(-sigma * (s - double(u + 1) / bins)));
          h(u) += w * (lo - hi);
        } else if (s >= double(u) / bins && (s < double(u + 1) / bins || (u == bins - 1 && s <= 1))) {
          h(u) += w;
        }
      }
    }
  }
  return h / kappa;
}

// sqrt with the linear continuation below the 1e-6 empty-bin floor.
Eigen::VectorXd root(const Eigen::VectorXd& v) {
  Eigen::VectorXd r(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    r(i) = v(i) >= 1e-6 ? std::sqrt(v(i)) : 0.5e-3 + v(i) / 2e-3;
  return r;
}

double logistic(double t) { return 1 / (1 + std::exp(-t)); }

}  // namespace

TEST_CASE("epanechnikov kernel values") {
  const KernelSpec unit{1.0, 1.0};
  CHECK(epanechnikov({0, 0}, unit) == 1.0);
  CHECK(epanechnikov({1, 0}, unit) == 0.0);
  CHECK(epanechnikov({1, 1}, KernelSpec{2.0, 2.0}) == doctest::Approx(0.5));
  CHECK(kernel_gradient({0, 0}, unit).isZero());
  CHECK(kernel_gradient({0.5, 0}, unit).isApprox(Eigen::Vector2d(-1, 0)));
}

TEST_CASE("kernel gradient matches finite differences inside the support") {
  const KernelSpec k{3.0, 2.0};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  int checked = 0;
  while (checked < 50) {
    const Eigen::Vector2d z(u(rng), u(rng));
    const double r2 = std::pow(z.x() / 3.0, 2) + std::pow(z.y() / 2.0, 2);
    if (std::abs(r2 - 1.0) < 1e-3) continue;
    const double h = 1e-6;
    const Eigen::Vector2d fd((epanechnikov(z + Eigen::Vector2d(h, 0), k) -
                              epanechnikov(z - Eigen::Vector2d(h, 0), k)) / (2 * h),
                             (epanechnikov(z + Eigen::Vector2d(0, h), k) -
                              epanechnikov(z - Eigen::Vector2d(0, h), k)) / (2 * h));
    CHECK((kernel_gradient(z, k) - fd).norm() < 1e-6);
    ++checked;
  }
}

TEST_CASE("hard histogram of a constant patch fills a single bin") {
  const TemplateGeometry g{9, 11};
  const KernelSpec k = kernel_for(g);
  const SoftHistogram h = hard_histogram(Eigen::VectorXd::Constant(99, 0.45), g, k, {});
  CHECK(h.values(4) == doctest::Approx(1.0));
  CHECK(h.values.sum() == doctest::Approx(1.0));
  CHECK(hard_bin(0.45, {}) == 4);
  CHECK(hard_bin(1.0, {}) == 9);
  CHECK(hard_bin(-0.1, {}) == -1);
}

TEST_CASE("histograms agree with a per-pixel loop") {
  const TemplateGeometry g{13, 17};
  const KernelSpec k = kernel_for(g);
  const Eigen::VectorXd patch = stack(testutil::smooth_frame(13, 17, 0.7));
  const Eigen::VectorXd hard = naive_histogram(patch, g, k, 10, false, 0);
  const Eigen::VectorXd soft = naive_histogram(patch, g, k, 10, true, 100);
  CHECK((hard_histogram(patch, g, k, {}).values - hard).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((soft_histogram(patch, g, k, {}).values - soft).cwiseAbs().maxCoeff() < 1e-12);
  const BinningSpec b7{7, 40};
  CHECK((soft_histogram(patch, g, k, b7).values - naive_histogram(patch, g, k, 7, true, 40))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("soft histogram approaches the hard one away from bin edges") {
  const TemplateGeometry g{15, 15};
  const KernelSpec k = kernel_for(g);
  // A pixel 0.05 from both edges keeps phi(5) - phi(-5) of its vote.
  const double kept = logistic(5) - logistic(-5);
  const SoftHistogram c = soft_histogram(Eigen::VectorXd::Constant(225, 0.45), g, k, {});
  CHECK(c.values(4) == doctest::Approx(kept).epsilon(1e-12));
  CHECK(c.values(3) == doctest::Approx(logistic(15) - logistic(5)).epsilon(1e-12));
  CHECK(c.values.sum() - c.values(4) < 1 - kept + 1e-12);

  // Bin centers sit exactly 0.05 from the nearest edge; the worst case is a
  // single occupied bin, which loses 1 - kept = 2 / (1 + e^5).
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> bin(0, 9);
  Eigen::VectorXd patch(225);
  for (int i = 0; i < 225; ++i) patch(i) = 0.1 * bin(rng) + 0.05;
  const double bound = 2 / (1 + std::exp(5.0)) + 1e-12;
  CHECK((soft_histogram(patch, g, k, {}).values - hard_histogram(patch, g, k, {}).values)
            .cwiseAbs()
            .maxCoeff() < bound);
  CHECK((c.values - hard_histogram(Eigen::VectorXd::Constant(225, 0.45), g, k, {}).values)
            .cwiseAbs()
            .maxCoeff() < bound);
}

TEST_CASE("sifting matrix rows telescope and reproduce the soft histogram") {
  const TemplateGeometry g{9, 9};
  const KernelSpec k = kernel_for(g);
  Eigen::VectorXd patch = stack(testutil::smooth_frame(9, 9, 1.1));
  patch(0) = 0.45;
  const Eigen::MatrixXd U = sifting_matrix(patch, {});
  CHECK(U(0, 4) == doctest::Approx(logistic(5) - logistic(-5)).epsilon(1e-12));
  for (Eigen::Index z = 0; z < U.rows(); ++z) {
    const double s = U.row(z).sum();
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    if (patch(z) >= 0.05 && patch(z) <= 0.95) CHECK(s > 0.99);
  }
  const Eigen::VectorXd w = kernel_weights(g, k);
  const SoftHistogram h = soft_histogram(patch, g, k, {});
  CHECK((U.transpose() * w / w.sum() - h.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sifting derivative matches finite differences of the sifting matrix") {
  Eigen::VectorXd s(4);
  s << 0.12, 0.37, 0.5, 0.93;
  const BinningSpec b{10, 100};
  const double h = 1e-7;
  const Eigen::MatrixXd fd =
      (sifting_matrix(s.array() + h, b) - sifting_matrix(s.array() - h, b)) / (2 * h);
  CHECK(testutil::relative_error(sifting_derivative(s, b), fd) < 1e-6);
}

TEST_CASE("matusita and bhattacharyya") {
  SoftHistogram a{Eigen::VectorXd::Unit(4, 0), 1}, b{Eigen::VectorXd::Unit(4, 2), 1};
  CHECK(matusita(a, a) == 0.0);
  CHECK(matusita(a, b) == doctest::Approx(2.0));
  const TemplateGeometry g{11, 11};
  const KernelSpec k = kernel_for(g);
  const SoftHistogram p = hard_histogram(stack(testutil::smooth_frame(11, 11, 0.2)), g, k, {});
  const SoftHistogram q = hard_histogram(stack(testutil::smooth_frame(11, 11, 2.5)), g, k, {});
  CHECK(matusita(p, q) == doctest::Approx(2.0 - 2.0 * bhattacharyya(p, q)).epsilon(1e-12));
  CHECK(matusita(p, q) == doctest::Approx(matusita(q, p)));
  CHECK(matusita(p, q) >= 0.0);
  CHECK(matusita(p, q) <= 2.0);
  CHECK_THROWS_AS(matusita(a, SoftHistogram{Eigen::VectorXd::Zero(3), 1}), Error);
}

TEST_CASE("window histogram equals the patch histogram on the pixel grid") {
  const Frame f = testutil::smooth_frame(40, 40);
  const TemplateGeometry g{11, 9};
  const KernelSpec k = kernel_for(g);
  const Eigen::Vector2d at(17.0, 21.0);
  const Eigen::VectorXd patch = extract_patch(f, at, g);
  CHECK((window_histogram(f, at, g, k, {}).values - soft_histogram(patch, g, k, {}).values)
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  const auto hj = window_histogram_jacobian(f, at, g, k, {});
  CHECK((hj.histogram.values - soft_histogram(patch, g, k, {}).values).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("location Jacobian L matches finite differences") {
  const Frame f = testutil::smooth_frame(50, 60);
  const TemplateGeometry g{15, 13};
  const KernelSpec k = kernel_for(g);
  const BinningSpec b{};
  for (const Eigen::Vector2d at : {Eigen::Vector2d(20.3, 22.7), Eigen::Vector2d(31.55, 18.2)}) {
    const Eigen::MatrixXd L = location_jacobian_L(f, at, g, k, b, 0.01);
    const Eigen::MatrixXd fd = testutil::central_jacobian(
        [&](const Eigen::VectorXd& l) { return root(window_histogram(f, l.head<2>(), g, k, b).values); },
        at, 1e-5);
    // L carries 1 / (2 sigma_H^2) d zeta, i.e. (1 / sigma_H^2) d sqrt(zeta).
    CHECK(testutil::relative_error(L * 0.01, fd) < 1e-3);
    CHECK(location_jacobian_L(f, at, g, k, b, 0.02).isApprox(L / 2.0));
  }
  const Frame flat = Frame::Constant(30, 30, 0.4);
  CHECK(location_jacobian_L(flat, {14.2, 15.6}, g, k, b, 0.01).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("state Jacobian M matches finite differences") {
  const LdsModel m = random_model(5, {15, 15}, 0.9, 21);
  const KernelSpec k = kernel_for(m.geometry);
  const BinningSpec b{};
  const Eigen::VectorXd x = 0.3 * testutil::random_matrix(5, 1, 22);
  const Eigen::MatrixXd M = state_jacobian_M(m, x, k, b, 0.01);
  CHECK(M.rows() == 10);
  CHECK(M.cols() == 5);
  const Eigen::MatrixXd fd = testutil::central_jacobian(
      [&](const Eigen::VectorXd& v) { return root(template_histogram(m, v, k, b).values); }, x,
      1e-6);
  CHECK(testutil::relative_error(M * 0.01, fd) < 1e-3);

  const auto hj = template_histogram_jacobian(m, x, k, b);
  CHECK((hj.histogram.values - soft_histogram(predict_template(m, x), m.geometry, k, b).values)
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  LdsModel flat = m;
  flat.C.setZero();
  CHECK(state_jacobian_M(flat, x, k, b, 0.01).isZero());
}

TEST_CASE("identity feature") {
  const Eigen::VectorXd p = testutil::random_matrix(6, 1, 23);
  CHECK(identity_feature(p) == p);
}
