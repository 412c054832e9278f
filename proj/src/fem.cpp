#include "pdeopt/fem.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "pdeopt/krylov.hpp"
#include "pdeopt/mmio.hpp"
#include "pdeopt/sparse_solvers.hpp"

namespace pdeopt {

namespace {

// Reference Q1 nodes, counterclockwise.
constexpr double kXi[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kEta[4] = {-1.0, -1.0, 1.0, 1.0};

double shape(int a, double xi, double eta) {
  return 0.25 * (1.0 + kXi[a] * xi) * (1.0 + kEta[a] * eta);
}

double dshape_dxi(int a, double /*xi*/, double eta) { return 0.25 * kXi[a] * (1.0 + kEta[a] * eta); }
double dshape_deta(int a, double xi, double /*eta*/) { return 0.25 * kEta[a] * (1.0 + kXi[a] * xi); }

struct GaussPoint {
  double xi, eta, weight;
};

// 2x2 Gauss rule on [-1,1]^2; exact for all Q1 products used below.
std::array<GaussPoint, 4> gauss22() {
  const double g = 1.0 / std::sqrt(3.0);
  return {{{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}}};
}

}  // namespace

Physics Physics::heat() {
  Physics p;
  p.kind = PhysicsKind::Heat;
  p.dofs_per_node = 1;
  p.material.conductivity = 1.0;
  return p;
}

Physics Physics::plane_strain_elasticity(double young_modulus, double poisson_ratio,
                                         double density) {
  if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5))
    throw ContractError("Physics: poisson_ratio must lie strictly in (0, 0.5)");
  if (young_modulus <= 0.0) throw ContractError("Physics: young_modulus must be positive");
  Physics p;
  p.kind = PhysicsKind::PlaneStrainElasticity;
  p.dofs_per_node = 2;
  p.material.young_modulus = young_modulus;
  p.material.poisson_ratio = poisson_ratio;
  p.material.density = density;
  return p;
}

Physics Physics::cantilever_rubber() { return plane_strain_elasticity(20.7e6, 0.45, 1.1); }

Eigen::Matrix4d element_mass_heat(double h) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  const double detj = h * h / 4.0;
  for (const auto& gp : gauss22())
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        m(a, b) += gp.weight * shape(a, gp.xi, gp.eta) * shape(b, gp.xi, gp.eta) * detj;
  return m;
}

Eigen::Matrix4d element_stiffness_heat() {
  // The physical gradient carries 2/h, the area element h^2/4: h cancels.
  Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
  for (const auto& gp : gauss22())
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        k(a, b) += gp.weight * (dshape_dxi(a, gp.xi, gp.eta) * dshape_dxi(b, gp.xi, gp.eta) +
                                dshape_deta(a, gp.xi, gp.eta) * dshape_deta(b, gp.xi, gp.eta));
  return k;
}

Eigen::Matrix<double, 8, 8> element_mass_elastic(double h) {
  const Eigen::Matrix4d scalar = element_mass_heat(h);
  Eigen::Matrix<double, 8, 8> m = Eigen::Matrix<double, 8, 8>::Zero();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 2; ++c) m(2 * a + c, 2 * b + c) = scalar(a, b);
  return m;
}

Eigen::Matrix<double, 8, 8> element_stiffness_plane_strain(const Physics& physics, double h) {
  const double e = physics.material.young_modulus;
  const double nu = physics.material.poisson_ratio;
  const double f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
  Eigen::Matrix3d d;
  d << f * (1.0 - nu), f * nu, 0.0,  //
      f * nu, f * (1.0 - nu), 0.0,   //
      0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0;

  Eigen::Matrix<double, 8, 8> k = Eigen::Matrix<double, 8, 8>::Zero();
  const double detj = h * h / 4.0;
  const double gscale = 2.0 / h;  // d/dx = (2/h) d/dxi on the uniform grid
  for (const auto& gp : gauss22()) {
    Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
    for (int a = 0; a < 4; ++a) {
      const double dx = gscale * dshape_dxi(a, gp.xi, gp.eta);
      const double dy = gscale * dshape_deta(a, gp.xi, gp.eta);
      b(0, 2 * a) = dx;
      b(1, 2 * a + 1) = dy;
      b(2, 2 * a) = dy;
      b(2, 2 * a + 1) = dx;
    }
    k += gp.weight * detj * b.transpose() * d * b;
  }
  return k;
}

std::vector<int> dirichlet_mesh_dofs(const StructuredMesh& mesh, const Physics& physics) {
  std::vector<int> dofs;
  if (physics.kind == PhysicsKind::Heat) {
    for (int node : mesh.boundary_nodes) dofs.push_back(node);
  } else {
    for (int j = 0; j <= mesh.n_y; ++j) {
      const int node = mesh.node_id(0, j);
      dofs.push_back(2 * node);
      dofs.push_back(2 * node + 1);
    }
  }
  return dofs;
}

AssembledOperators assemble_operators(const StructuredMesh& mesh, const Physics& physics) {
  const int dpn = physics.dofs_per_node;
  const int n_mesh_dofs = mesh.n_nodes() * dpn;

  AssembledOperators ops;
  ops.free_dof_map.assign(n_mesh_dofs, -1);
  ops.constrained_dof_map.assign(n_mesh_dofs, -1);
  std::vector<char> is_constrained(n_mesh_dofs, 0);
  for (int d : dirichlet_mesh_dofs(mesh, physics)) is_constrained[d] = 1;
  for (int d = 0; d < n_mesh_dofs; ++d) {
    if (is_constrained[d]) {
      ops.constrained_dof_map[d] = static_cast<int>(ops.constrained_dofs.size());
      ops.constrained_dofs.push_back(d);
    } else {
      ops.free_dof_map[d] = static_cast<int>(ops.free_dofs.size());
      ops.free_dofs.push_back(d);
    }
  }
  const int n = static_cast<int>(ops.free_dofs.size());
  const int m = static_cast<int>(ops.constrained_dofs.size());

  const int edofs = 4 * dpn;
  Eigen::MatrixXd ke, me;
  if (physics.kind == PhysicsKind::Heat) {
    ke = element_stiffness_heat();
    me = element_mass_heat(mesh.h);
  } else {
    ke = element_stiffness_plane_strain(physics, mesh.h);
    me = element_mass_elastic(mesh.h);
  }

  std::vector<Triplet<double>> tk, tv, tkc;
  tk.reserve(static_cast<std::size_t>(mesh.n_elements()) * edofs * edofs);
  tv.reserve(tk.capacity());
  std::vector<int> gdof(edofs);
  double mass_sum = 0.0;
  for (const auto& elem : mesh.elements) {
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < dpn; ++c) gdof[dpn * a + c] = dpn * elem[a] + c;
    for (int a = 0; a < edofs; ++a) {
      const int fa = ops.free_dof_map[gdof[a]];
      for (int b = 0; b < edofs; ++b) {
        mass_sum += me(a, b);
        if (fa < 0) continue;
        const int fb = ops.free_dof_map[gdof[b]];
        if (fb >= 0) {
          tk.push_back({fa, fb, ke(a, b)});
          tv.push_back({fa, fb, me(a, b)});
        } else {
          tkc.push_back({fa, ops.constrained_dof_map[gdof[b]], ke(a, b)});
        }
      }
    }
  }
  ops.K = CsrMatrix<double>::from_triplets(n, n, std::move(tk), true);
  ops.V = CsrMatrix<double>::from_triplets(n, n, std::move(tv), true);
  ops.Kc = CsrMatrix<double>::from_triplets(n, m, std::move(tkc), false);
  ops.mass_entry_sum = mass_sum;
  return ops;
}

double evaluate_target_thermal(double x1, double x2) {
  if (x1 < 0.0 || x1 > 1.0 || x2 < 0.0 || x2 > 1.0)
    throw ContractError("evaluate_target_thermal: point outside the unit square");
  if (x1 <= 0.5 && x2 <= 0.5) {
    const double a = 2.0 * x1 - 1.0, b = 2.0 * x2 - 1.0;
    return a * a * b * b;
  }
  return 0.0;
}

Vec target_state_thermal(const StructuredMesh& mesh, const AssembledOperators& ops) {
  Vec target(ops.n());
  for (int f = 0; f < ops.n(); ++f) {
    const int node = ops.free_dofs[f];
    target[f] = evaluate_target_thermal(mesh.node_x(node), mesh.node_y(node));
  }
  return target;
}

Vec dirichlet_values_thermal(const StructuredMesh& mesh, const AssembledOperators& ops) {
  Vec yc(ops.m());
  for (int c = 0; c < ops.m(); ++c) {
    const int node = ops.constrained_dofs[c];
    yc[c] = evaluate_target_thermal(mesh.node_x(node), mesh.node_y(node));
  }
  return yc;
}

Vec bottom_pressure_load(const StructuredMesh& mesh, const Physics& physics,
                         const AssembledOperators& ops, double pressure) {
  if (physics.kind != PhysicsKind::PlaneStrainElasticity)
    throw ContractError("bottom_pressure_load: elasticity physics required");
  Vec f = Vec::Zero(ops.n());
  // Consistent traction of a constant downward pressure on each bottom edge:
  // h/2 per edge end node.
  const double nodal = -pressure * mesh.h / 2.0;
  for (int i = 0; i < mesh.n_x; ++i) {
    for (int node : {mesh.node_id(i, 0), mesh.node_id(i + 1, 0)}) {
      const int dof = 2 * node + 1;
      const int fi = ops.free_dof_map[dof];
      if (fi >= 0) f[fi] += nodal;
    }
  }
  return f;
}

Vec forward_solve_elastic_target(const StructuredMesh& mesh, const Physics& physics,
                                 const AssembledOperators& ops, double pressure) {
  const Vec f = bottom_pressure_load(mesh, physics, ops, pressure);
  if (f.norm() == 0.0) return Vec::Zero(ops.n());
  SpdCholesky chol(ops.K);
  Vec y = chol.solve(f);
  // Normwise backward error; ||r||/||f|| alone is amplified by ||K|| ||y|| / ||f||
  // and cannot reach 1e-12 in double on the softer meshes.
  double k_inf = 0.0;
  for (int r = 0; r < ops.K.n_rows; ++r) {
    double row = 0.0;
    for (int k = ops.K.row_offsets[r]; k < ops.K.row_offsets[r + 1]; ++k)
      row += std::abs(ops.K.values[k]);
    k_inf = std::max(k_inf, row);
  }
  auto backward_error = [&](const Vec& yy) {
    return (f - ops.K * yy).norm() / (k_inf * yy.norm() + f.norm());
  };
  for (int sweep = 0; sweep < 3; ++sweep) {
    if (backward_error(y) <= 1e-14) break;
    const Vec r = f - ops.K * y;
    y += chol.solve(r);
  }
  if (backward_error(y) > 1e-12)
    throw NumericalError("forward_solve_elastic_target: forward solve did not reach 1e-12");
  return y;
}

std::string mesh_descriptor_to_json(const StructuredMesh& mesh, const Physics& physics) {
  nlohmann::json j;
  j["mesh"] = {{"n_x", mesh.n_x}, {"n_y", mesh.n_y}, {"len_x", mesh.len_x}, {"len_y", mesh.len_y}};
  if (physics.kind == PhysicsKind::Heat) {
    j["physics"] = {{"kind", "heat"}, {"conductivity", physics.material.conductivity}};
  } else {
    j["physics"] = {{"kind", "plane_strain_elasticity"},
                    {"young_modulus", physics.material.young_modulus},
                    {"poisson_ratio", physics.material.poisson_ratio},
                    {"density", physics.material.density}};
  }
  return j.dump(2);
}

std::pair<StructuredMesh, Physics> mesh_descriptor_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const auto& jm = j.at("mesh");
  StructuredMesh mesh =
      build_rectangle_mesh(jm.at("n_x").get<int>(), jm.at("n_y").get<int>(),
                           jm.value("len_x", 1.0), jm.value("len_y", 1.0));
  const auto& jp = j.at("physics");
  const std::string kind = jp.at("kind").get<std::string>();
  Physics physics;
  if (kind == "heat") {
    physics = Physics::heat();
    physics.material.conductivity = jp.value("conductivity", 1.0);
  } else if (kind == "plane_strain_elasticity") {
    physics = Physics::plane_strain_elasticity(jp.at("young_modulus").get<double>(),
                                               jp.at("poisson_ratio").get<double>(),
                                               jp.value("density", 0.0));
  } else {
    throw ContractError("mesh_descriptor_from_json: unknown physics kind '" + kind + "'");
  }
  return {std::move(mesh), physics};
}

void export_operators_matrix_market(const AssembledOperators& ops, const std::string& prefix) {
  write_matrix_market(prefix + "_K.mtx", ops.K);
  write_matrix_market(prefix + "_V.mtx", ops.V);
  write_matrix_market(prefix + "_Kc.mtx", ops.Kc);
}

}  // namespace pdeopt
