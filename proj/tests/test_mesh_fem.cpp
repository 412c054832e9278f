#include <doctest.h>

#include "pdeopt/fem.hpp"
#include "pdeopt/mesh.hpp"
#include "pdeopt/mmio.hpp"
#include "test_helpers.hpp"

using namespace pdeopt;
using namespace pdeopt::testing;

namespace {

// Independent quadrature oracle: n-point Gauss-Legendre product rule on the
// reference square, refined until it is clearly converged. Used to freeze
// the expected Q1 element integrals.
std::pair<std::vector<double>, std::vector<double>> gauss_rule(int n) {
  // Newton iteration on Legendre polynomials.
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[i] = t;
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (t * p1 - p0) / (t * t - 1.0);
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  return {x, w};
}

double q1_shape(int a, double xi, double eta) {
  constexpr double sx[4] = {-1, 1, 1, -1};
  constexpr double sy[4] = {-1, -1, 1, 1};
  return 0.25 * (1 + sx[a] * xi) * (1 + sy[a] * eta);
}

Eigen::Matrix4d element_mass_by_refined_quadrature(double h, int points) {
  auto [x, w] = gauss_rule(points);
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < points; ++j)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          m(a, b) += w[i] * w[j] * q1_shape(a, x[i], x[j]) * q1_shape(b, x[i], x[j]) * h * h / 4.0;
  return m;
}

}  // namespace

TEST_CASE("unit square mesh counts") {
  const auto m2 = build_unit_square_mesh(2);
  CHECK(m2.n_nodes() == 9);
  CHECK(m2.n_elements() == 4);
  CHECK(m2.boundary_nodes.size() == 8);

  const auto m4 = build_unit_square_mesh(4);
  CHECK(m4.n_nodes() == 25);
  CHECK(m4.n_elements() == 16);
  CHECK(m4.h == doctest::Approx(0.25));

  const auto m128 = build_unit_square_mesh(128);
  CHECK(m128.h == doctest::Approx(1.0 / 128));
}

TEST_CASE("mesh rejects invalid sizes") {
  CHECK_THROWS_AS(build_unit_square_mesh(1), ContractError);
  CHECK_THROWS_AS(build_rectangle_mesh(4, 4, 3.0, 1.0), ContractError);  // non-square elements
}

TEST_CASE("boundary nodes are exactly the nodes on the domain edge") {
  const auto mesh = build_unit_square_mesh(5);
  std::vector<char> flagged(mesh.n_nodes(), 0);
  for (int b : mesh.boundary_nodes) flagged[b] = 1;
  for (int id = 0; id < mesh.n_nodes(); ++id) {
    const double x = mesh.node_x(id), y = mesh.node_y(id);
    const bool on_edge = x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0;
    CHECK(static_cast<bool>(flagged[id]) == on_edge);
  }
}

TEST_CASE("element connectivity is counterclockwise with positive Jacobian") {
  const auto mesh = build_unit_square_mesh(3);
  for (const auto& e : mesh.elements) {
    const double x0 = mesh.node_x(e[0]), y0 = mesh.node_y(e[0]);
    const double x1 = mesh.node_x(e[1]), y1 = mesh.node_y(e[1]);
    const double x3 = mesh.node_x(e[3]), y3 = mesh.node_y(e[3]);
    const double cross = (x1 - x0) * (y3 - y0) - (y1 - y0) * (x3 - x0);
    CHECK(cross > 0.0);
    CHECK(cross == doctest::Approx(mesh.h * mesh.h));
  }
}

TEST_CASE("heat element mass matches the exact values and the quadrature oracle") {
  const double h = 0.3;
  Eigen::Matrix4d expected;
  expected << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
  expected *= h * h / 36.0;
  const Eigen::Matrix4d got = element_mass_heat(h);
  CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-15);

  const Eigen::Matrix4d refined = element_mass_by_refined_quadrature(h, 6);
  CHECK((got - refined).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("heat element stiffness rows sum to zero") {
  const Eigen::Matrix4d k = element_stiffness_heat();
  for (int a = 0; a < 4; ++a) CHECK(std::abs(k.row(a).sum()) <= 1e-14);
  // known closed form for the square Q1 Laplacian
  CHECK(k(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(k(0, 2) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("assembled thermal operators satisfy the SPD and partition invariants") {
  const auto mesh = build_unit_square_mesh(4);
  const auto physics = Physics::heat();
  const auto ops = assemble_operators(mesh, physics);
  CHECK(ops.n() == 9);   // interior 3x3 nodes
  CHECK(ops.m() == 16);  // boundary nodes
  CHECK(ops.K.check_symmetric(0.0));
  CHECK(ops.V.check_symmetric(0.0));
  CHECK(ops.mass_entry_sum == doctest::Approx(1.0).epsilon(1e-14));

  const Vec evk = dense_eigenvalues(ops.K.to_dense());
  const Vec evv = dense_eigenvalues(ops.V.to_dense());
  CHECK(evk[0] > 0.0);
  CHECK(evv[0] > 0.0);
}

TEST_CASE("row sums of the unconstrained heat stiffness vanish (K 1 + Kc 1 = 0)") {
  const auto mesh = build_unit_square_mesh(6);
  const auto ops = assemble_operators(mesh, Physics::heat());
  const Vec ones_n = Vec::Ones(ops.n());
  const Vec ones_m = Vec::Ones(ops.m());
  const Vec rowsum = ops.K * ones_n + ops.Kc * ones_m;
  CHECK(rowsum.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("assembly is bit-for-bit deterministic") {
  const auto mesh = build_unit_square_mesh(8);
  const auto a = assemble_operators(mesh, Physics::heat());
  const auto b = assemble_operators(mesh, Physics::heat());
  REQUIRE(a.K.values.size() == b.K.values.size());
  for (std::size_t i = 0; i < a.K.values.size(); ++i) CHECK(a.K.values[i] == b.K.values[i]);
  for (std::size_t i = 0; i < a.V.values.size(); ++i) CHECK(a.V.values[i] == b.V.values[i]);
}

TEST_CASE("mass condition number stays bounded across refinement") {
  // The quasi-uniformity bound concerns the mass operator itself; assemble
  // the full (untrimmed) consistent mass as the reference object.
  double lo = 1e300, hi = 0.0;
  for (int n : {4, 8, 16, 32}) {
    const auto mesh = build_unit_square_mesh(n);
    const auto me = element_mass_heat(mesh.h);
    std::vector<Triplet<double>> tv;
    for (const auto& e : mesh.elements)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) tv.push_back({e[a], e[b], me(a, b)});
    const auto vfull =
        CsrMatrix<double>::from_triplets(mesh.n_nodes(), mesh.n_nodes(), std::move(tv), true);
    const double cond = dense_condition_number(vfull.to_dense());
    lo = std::min(lo, cond);
    hi = std::max(hi, cond);
  }
  CHECK(hi <= lo * 1.5);

  // The Dirichlet-eliminated block inherits the bound once the boundary
  // layer stops dominating.
  double lo2 = 1e300, hi2 = 0.0;
  for (int n : {8, 16, 32}) {
    const auto ops = assemble_operators(build_unit_square_mesh(n), Physics::heat());
    const double cond = dense_condition_number(ops.V.to_dense());
    lo2 = std::min(lo2, cond);
    hi2 = std::max(hi2, cond);
  }
  CHECK(hi2 <= lo2 * 1.5);
}

TEST_CASE("stiffness condition number grows like h^-2") {
  double prev = 0.0;
  for (int n : {8, 16, 32}) {
    const auto ops = assemble_operators(build_unit_square_mesh(n), Physics::heat());
    const double cond = dense_condition_number(ops.K.to_dense());
    if (prev > 0.0) {
      const double growth = cond / prev;
      CHECK(growth >= 4.0 * 0.75);
      CHECK(growth <= 4.0 * 1.25);
    }
    prev = cond;
  }
}

TEST_CASE("thermal target evaluation") {
  CHECK(evaluate_target_thermal(0.25, 0.25) == doctest::Approx(0.0625));
  CHECK(evaluate_target_thermal(0.5, 0.5) == 0.0);
  CHECK(evaluate_target_thermal(0.75, 0.25) == 0.0);
  CHECK(evaluate_target_thermal(0.0, 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(evaluate_target_thermal(1.5, 0.0), ContractError);
}

TEST_CASE("thermal dirichlet values sample the target on the boundary") {
  const auto mesh = build_unit_square_mesh(4);
  const auto ops = assemble_operators(mesh, Physics::heat());
  const Vec yc = dirichlet_values_thermal(mesh, ops);
  for (int c = 0; c < ops.m(); ++c) {
    const int node = ops.constrained_dofs[c];
    const double x = mesh.node_x(node), y = mesh.node_y(node);
    if (x == 0.0 && y == 0.0) CHECK(yc[c] == doctest::Approx(1.0));
    if (x == 1.0 && y == 0.5) CHECK(yc[c] == 0.0);
    if (x == 0.0 && y == 0.25) CHECK(yc[c] == doctest::Approx(0.25));
  }
}

TEST_CASE("physics contract checks") {
  CHECK_THROWS_AS(Physics::plane_strain_elasticity(1e6, 0.5, 1.0), ContractError);
  CHECK_THROWS_AS(Physics::plane_strain_elasticity(1e6, 0.0, 1.0), ContractError);
  const auto p = Physics::cantilever_rubber();
  CHECK(p.dofs_per_node == 2);
  CHECK(p.material.young_modulus == doctest::Approx(20.7e6));
}

TEST_CASE("elasticity operators: mass partition of unity and SPD stiffness") {
  const auto mesh = build_rectangle_mesh(12, 4, 3.0, 1.0);
  const auto physics = Physics::cantilever_rubber();
  const auto ops = assemble_operators(mesh, physics);
  // area 3, two dofs per node
  CHECK(ops.mass_entry_sum == doctest::Approx(6.0).epsilon(1e-13));
  const Vec evk = dense_eigenvalues(ops.K.to_dense());
  CHECK(evk[0] > 0.0);  // clamped edge removes the rigid modes
}

TEST_CASE("elastic element stiffness has the three zero-energy modes") {
  const auto physics = Physics::cantilever_rubber();
  const Eigen::Matrix<double, 8, 8> k = element_stiffness_plane_strain(physics, 0.25);
  // translations x/y and the in-plane rotation about the element center
  Eigen::Matrix<double, 8, 1> tx, ty, rot;
  const double xs[4] = {0, 0.25, 0.25, 0}, ys[4] = {0, 0, 0.25, 0.25};
  for (int a = 0; a < 4; ++a) {
    tx(2 * a) = 1;
    tx(2 * a + 1) = 0;
    ty(2 * a) = 0;
    ty(2 * a + 1) = 1;
    rot(2 * a) = -(ys[a] - 0.125);
    rot(2 * a + 1) = xs[a] - 0.125;
  }
  const double scale = k.cwiseAbs().maxCoeff();
  CHECK((k * tx).norm() <= 1e-12 * scale);
  CHECK((k * ty).norm() <= 1e-12 * scale);
  CHECK((k * rot).norm() <= 1e-12 * scale);
}

TEST_CASE("forward elastic target: zero load, downward tip, linearity") {
  const auto mesh = build_rectangle_mesh(12, 4, 3.0, 1.0);
  const auto physics = Physics::cantilever_rubber();
  const auto ops = assemble_operators(mesh, physics);

  const Vec y0 = forward_solve_elastic_target(mesh, physics, ops, 0.0);
  CHECK(y0.norm() == 0.0);

  const Vec y1 = forward_solve_elastic_target(mesh, physics, ops, 100e3);
  // vertical displacement at the free-end bottom corner
  const int tip_node = mesh.node_id(mesh.n_x, 0);
  const int tip_dof = ops.free_dof_map[2 * tip_node + 1];
  REQUIRE(tip_dof >= 0);
  CHECK(y1[tip_dof] < 0.0);

  const Vec y2 = forward_solve_elastic_target(mesh, physics, ops, 200e3);
  CHECK((y2 - 2.0 * y1).norm() <= 1e-12 * y2.norm());
}

TEST_CASE("mesh descriptor json round-trip") {
  const auto mesh = build_rectangle_mesh(6, 2, 3.0, 1.0);
  const auto physics = Physics::cantilever_rubber();
  const std::string text = mesh_descriptor_to_json(mesh, physics);
  const auto [mesh2, physics2] = mesh_descriptor_from_json(text);
  CHECK(mesh2.n_x == 6);
  CHECK(mesh2.n_y == 2);
  CHECK(mesh2.len_x == doctest::Approx(3.0));
  CHECK(physics2.kind == PhysicsKind::PlaneStrainElasticity);
  CHECK(physics2.material.poisson_ratio == doctest::Approx(0.45));

  const auto heat = Physics::heat();
  const auto m = build_unit_square_mesh(4);
  const auto [m2, p2] = mesh_descriptor_from_json(mesh_descriptor_to_json(m, heat));
  CHECK(p2.kind == PhysicsKind::Heat);
  CHECK(m2.n_x == 4);
}

TEST_CASE("matrix market export writes the three operator files") {
  const auto mesh = build_unit_square_mesh(3);
  const auto ops = assemble_operators(mesh, Physics::heat());
  const std::string prefix = "/tmp/pdeopt_test_ops";
  export_operators_matrix_market(ops, prefix);
  const auto k = read_matrix_market_real(prefix + "_K.mtx");
  const auto v = read_matrix_market_real(prefix + "_V.mtx");
  const auto kc = read_matrix_market_real(prefix + "_Kc.mtx");
  CHECK((k.to_dense() - ops.K.to_dense()).norm() == 0.0);
  CHECK((v.to_dense() - ops.V.to_dense()).norm() == 0.0);
  CHECK((kc.to_dense() - ops.Kc.to_dense()).norm() == 0.0);
}
