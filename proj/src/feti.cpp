#include "pdeopt/feti.hpp"

#include <algorithm>
#include <cmath>

#include "pdeopt/parallel.hpp"

namespace pdeopt {

namespace {

// Subdomain index range along one axis containing grid line i.
std::pair<int, int> owner_range(int i, int e_per_sub, int n_sub) {
  const int lo = (i == 0) ? 0 : (i - 1) / e_per_sub;
  const int hi = std::min(n_sub - 1, i / e_per_sub);
  return {lo, hi};
}

template <class T>
T scalar_cast(const Complex& z);

template <>
double scalar_cast<double>(const Complex& z) {
  return z.real();
}

template <>
Complex scalar_cast<Complex>(const Complex& z) {
  return z;
}

}  // namespace

FetiPartition partition_structured(const StructuredMesh& mesh, const Physics& physics,
                                   const AssembledOperators& ops, int s_x, int s_y) {
  if (s_x < 1 || s_y < 1 || s_x * s_y < 2)
    throw ContractError("partition_structured: need at least two subdomains");
  if (mesh.n_x % s_x != 0 || mesh.n_y % s_y != 0)
    throw ContractError("partition_structured: subdomain grid must divide the element grid");
  const int ex = mesh.n_x / s_x, ey = mesh.n_y / s_y;
  if (ex < 2 || ey < 2) throw ContractError("partition_structured: H/h must be at least 2");

  const int dpn = physics.dofs_per_node;
  FetiPartition part;
  part.s_x = s_x;
  part.s_y = s_y;
  part.ex = ex;
  part.ey = ey;
  part.h = mesh.h;
  part.H_x = ex * mesh.h;
  part.H_y = ey * mesh.h;
  part.dofs_per_node = dpn;
  part.n_free = ops.n();

  const int nn = mesh.n_nodes();
  std::vector<int> node_mult(nn, 0);
  std::vector<char> node_corner(nn, 0);
  for (int j = 0; j <= mesh.n_y; ++j) {
    const auto [qlo, qhi] = owner_range(j, ey, s_y);
    for (int i = 0; i <= mesh.n_x; ++i) {
      const auto [plo, phi] = owner_range(i, ex, s_x);
      const int node = mesh.node_id(i, j);
      node_mult[node] = (phi - plo + 1) * (qhi - qlo + 1);
      const bool free_node = ops.free_dof_map[node * dpn] >= 0;
      node_corner[node] = (i % ex == 0) && (j % ey == 0) && node_mult[node] >= 2 && free_node;
    }
  }

  // Global corner and multiplier numbering, ascending by (node, component).
  std::vector<int> corner_of_dof(static_cast<std::size_t>(nn) * dpn, -1);
  std::vector<int> lambda_of_dof(static_cast<std::size_t>(nn) * dpn, -1);
  for (int node = 0; node < nn; ++node) {
    if (ops.free_dof_map[node * dpn] < 0) continue;
    if (node_corner[node]) {
      for (int c = 0; c < dpn; ++c) corner_of_dof[node * dpn + c] = part.n_corner_dofs++;
    } else if (node_mult[node] >= 2) {
      if (node_mult[node] != 2)
        throw NumericalError("partition_structured: unexpected interface multiplicity");
      for (int c = 0; c < dpn; ++c) lambda_of_dof[node * dpn + c] = part.n_lambda++;
    }
  }

  part.free_multiplicity.assign(part.n_free, 1);
  for (int node = 0; node < nn; ++node)
    for (int c = 0; c < dpn; ++c) {
      const int f = ops.free_dof_map[node * dpn + c];
      if (f >= 0) part.free_multiplicity[f] = node_mult[node];
    }

  part.subdomains.resize(part.n_subdomains());
  for (int q = 0; q < s_y; ++q) {
    for (int p = 0; p < s_x; ++p) {
      const int sid = q * s_x + p;
      auto& sub = part.subdomains[sid];
      for (int j = q * ey; j < (q + 1) * ey; ++j)
        for (int i = p * ex; i < (p + 1) * ex; ++i) sub.elements.push_back(j * mesh.n_x + i);

      for (int j = q * ey; j <= (q + 1) * ey; ++j) {
        for (int i = p * ex; i <= (p + 1) * ex; ++i) {
          const int node = mesh.node_id(i, j);
          for (int c = 0; c < dpn; ++c) {
            const int md = node * dpn + c;
            const int f = ops.free_dof_map[md];
            if (f < 0) continue;
            const int local = static_cast<int>(sub.dofs.size());
            sub.dofs.push_back(f);
            sub.weights.push_back(1.0 / node_mult[node]);
            if (node_corner[node]) {
              sub.corner_local.push_back(local);
              sub.corner_global.push_back(corner_of_dof[md]);
            } else {
              const int rpos = static_cast<int>(sub.r_local.size());
              sub.r_local.push_back(local);
              if (lambda_of_dof[md] >= 0) {
                sub.r_boundary.push_back(rpos);
                sub.lambda_rows.push_back(lambda_of_dof[md]);
                // Sign convention: the lower subdomain id of the pair gets +1.
                const auto [plo2, phi2] = owner_range(i, ex, s_x);
                const auto [qlo2, qhi2] = owner_range(j, ey, s_y);
                const int lowest = qlo2 * s_x + plo2;
                sub.lambda_signs.push_back(sid == lowest ? 1.0 : -1.0);
              } else {
                sub.r_interior.push_back(rpos);
              }
            }
          }
        }
      }
    }
  }

  // Interface edges: open segments between subdomain-grid vertices.
  auto push_edge = [&](FetiPartition::Edge edge) {
    for (int node : edge.nodes)
      for (int c = 0; c < dpn; ++c) edge.lambda_rows.push_back(lambda_of_dof[node * dpn + c]);
    if (!edge.nodes.empty()) part.edges.push_back(std::move(edge));
  };
  for (int q = 0; q < s_y; ++q) {
    for (int p = 1; p < s_x; ++p) {
      FetiPartition::Edge edge;
      edge.vertical = true;
      edge.sub_lo = q * s_x + (p - 1);
      edge.sub_hi = q * s_x + p;
      edge.mid_x = p * ex * mesh.h;
      edge.mid_y = (q + 0.5) * ey * mesh.h;
      for (int j = q * ey + 1; j < (q + 1) * ey; ++j) {
        const int node = mesh.node_id(p * ex, j);
        if (ops.free_dof_map[node * dpn] >= 0) edge.nodes.push_back(node);
      }
      push_edge(std::move(edge));
    }
  }
  for (int q = 1; q < s_y; ++q) {
    for (int p = 0; p < s_x; ++p) {
      FetiPartition::Edge edge;
      edge.vertical = false;
      edge.sub_lo = (q - 1) * s_x + p;
      edge.sub_hi = q * s_x + p;
      edge.mid_x = (p + 0.5) * ex * mesh.h;
      edge.mid_y = q * ey * mesh.h;
      for (int i = p * ex + 1; i < (p + 1) * ex; ++i) {
        const int node = mesh.node_id(i, q * ey);
        if (ops.free_dof_map[node * dpn] >= 0) edge.nodes.push_back(node);
      }
      push_edge(std::move(edge));
    }
  }
  return part;
}

AugmentationSpace build_edge_rbm_augmentation(const FetiPartition& partition,
                                              const Physics& physics) {
  AugmentationSpace aug;
  aug.n_lambda = partition.n_lambda;
  const int dpn = physics.dofs_per_node;
  for (std::size_t e = 0; e < partition.edges.size(); ++e) {
    const auto& edge = partition.edges[e];
    const int n_nodes = static_cast<int>(edge.nodes.size());
    std::vector<AugmentationSpace::Column> cols;
    if (dpn == 1) {
      AugmentationSpace::Column col;
      col.edge = static_cast<int>(e);
      for (int k = 0; k < n_nodes; ++k) {
        col.rows.push_back(edge.lambda_rows[k]);
        col.values.push_back(1.0);
      }
      cols.push_back(std::move(col));
    } else {
      AugmentationSpace::Column tx, ty, rot;
      tx.edge = ty.edge = rot.edge = static_cast<int>(e);
      for (int k = 0; k < n_nodes; ++k) {
        const int row_x = edge.lambda_rows[2 * k];
        const int row_y = edge.lambda_rows[2 * k + 1];
        tx.rows.push_back(row_x);
        tx.values.push_back(1.0);
        ty.rows.push_back(row_y);
        ty.values.push_back(1.0);
        // In-plane rotation about the edge midpoint: (dx, dy) = (-(y-ym), x-xm);
        // only the coordinate along the edge varies. The nodes sit symmetric
        // about the midpoint, offset by multiples of h.
        const double arm = (k - 0.5 * (n_nodes - 1)) * partition.h;
        if (edge.vertical) {
          rot.rows.push_back(row_x);
          rot.values.push_back(-arm);
        } else {
          rot.rows.push_back(row_y);
          rot.values.push_back(arm);
        }
      }
      cols.push_back(std::move(tx));
      cols.push_back(std::move(ty));
      cols.push_back(std::move(rot));
    }
    for (auto& col : cols) {
      double norm2 = 0.0;
      for (double v : col.values) norm2 += v * v;
      if (norm2 <= 0.0)
        throw NumericalError("build_edge_rbm_augmentation: dependent (zero) column on edge " +
                             std::to_string(e) + "; H/h too small for a rotation mode");
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& v : col.values) v *= inv;
      aug.columns.push_back(std::move(col));
    }
    // Columns of one edge must stay mutually orthogonal (translations hit
    // disjoint components, the rotation arms sum to zero); the dual-space
    // deflation below relies on it.
    const std::size_t first = aug.columns.size() - cols.size();
    for (std::size_t a = first; a < aug.columns.size(); ++a) {
      for (std::size_t b = a + 1; b < aug.columns.size(); ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < aug.columns[a].rows.size(); ++i)
          for (std::size_t j = 0; j < aug.columns[b].rows.size(); ++j)
            if (aug.columns[a].rows[i] == aug.columns[b].rows[j])
              dot += aug.columns[a].values[i] * aug.columns[b].values[j];
        if (std::abs(dot) > 1e-12)
          throw NumericalError("build_edge_rbm_augmentation: dependent columns on edge " +
                               std::to_string(e));
      }
    }
  }
  return aug;
}

template <class T>
std::vector<SubdomainBlocks<T>> assemble_subdomain_operators(const StructuredMesh& mesh,
                                                             const Physics& physics,
                                                             const AssembledOperators& ops,
                                                             const FetiPartition& partition,
                                                             const OperatorSpec& spec) {
  if constexpr (std::is_same_v<T, double>) {
    if (!spec.is_real())
      throw ContractError("assemble_subdomain_operators: complex spec with a real scalar type");
  }
  const int dpn = physics.dofs_per_node;
  const int edofs = 4 * dpn;
  Eigen::MatrixXd ke, me;
  if (physics.kind == PhysicsKind::Heat) {
    ke = element_stiffness_heat();
    me = element_mass_heat(mesh.h);
  } else {
    ke = element_stiffness_plane_strain(physics, mesh.h);
    me = element_mass_elastic(mesh.h);
  }
  DenseMatrix<T> ae = scalar_cast<T>(Complex(spec.stiffness_coeff)) * ke.cast<T>() +
                      scalar_cast<T>(spec.mass_coeff) * me.cast<T>();

  const int nsub = partition.n_subdomains();
  std::vector<SubdomainBlocks<T>> blocks(nsub);
  std::vector<std::string> failures(nsub);

  parallel_for(nsub, 1, [&](int s) {
    const auto& sub = partition.subdomains[s];
    const int n_loc = static_cast<int>(sub.dofs.size());
    const int n_c = static_cast<int>(sub.corner_local.size());
    const int n_r = static_cast<int>(sub.r_local.size());
    const int n_i = static_cast<int>(sub.r_interior.size());
    const int n_b = static_cast<int>(sub.r_boundary.size());

    // local index -> (corner|remaining, position); within r: interior|boundary.
    std::vector<int> cat(n_loc, -1), pos(n_loc, -1);
    for (int k = 0; k < n_c; ++k) {
      cat[sub.corner_local[k]] = 0;
      pos[sub.corner_local[k]] = k;
    }
    for (int k = 0; k < n_r; ++k) {
      cat[sub.r_local[k]] = 1;
      pos[sub.r_local[k]] = k;
    }
    std::vector<int> r_cat(n_r, 0), r_pos(n_r, -1);
    for (int k = 0; k < n_i; ++k) {
      r_cat[sub.r_interior[k]] = 0;
      r_pos[sub.r_interior[k]] = k;
    }
    for (int k = 0; k < n_b; ++k) {
      r_cat[sub.r_boundary[k]] = 1;
      r_pos[sub.r_boundary[k]] = k;
    }

    std::vector<int> local_of_free(ops.n(), -1);
    for (int l = 0; l < n_loc; ++l) local_of_free[sub.dofs[l]] = l;

    std::vector<Eigen::Triplet<T>> trr, trc, tii, tib, tbb;
    DenseMatrix<T> acc = DenseMatrix<T>::Zero(n_c, n_c);
    std::vector<int> gdof(edofs);
    for (int eid : sub.elements) {
      const auto& elem = mesh.elements[eid];
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < dpn; ++c) gdof[dpn * a + c] = dpn * elem[a] + c;
      for (int a = 0; a < edofs; ++a) {
        const int fa = ops.free_dof_map[gdof[a]];
        if (fa < 0) continue;
        const int la = local_of_free[fa];
        for (int b = 0; b < edofs; ++b) {
          const int fb = ops.free_dof_map[gdof[b]];
          if (fb < 0) continue;
          const int lb = local_of_free[fb];
          const T v = ae(a, b);
          if (cat[la] == 0 && cat[lb] == 0) {
            acc(pos[la], pos[lb]) += v;
          } else if (cat[la] == 1 && cat[lb] == 0) {
            trc.emplace_back(pos[la], pos[lb], v);
          } else if (cat[la] == 1 && cat[lb] == 1) {
            const int ra = pos[la], rb = pos[lb];
            trr.emplace_back(ra, rb, v);
            if (r_cat[ra] == 0 && r_cat[rb] == 0)
              tii.emplace_back(r_pos[ra], r_pos[rb], v);
            else if (r_cat[ra] == 0 && r_cat[rb] == 1)
              tib.emplace_back(r_pos[ra], r_pos[rb], v);
            else if (r_cat[ra] == 1 && r_cat[rb] == 1)
              tbb.emplace_back(r_pos[ra], r_pos[rb], v);
          }
        }
      }
    }

    auto& blk = blocks[s];
    blk.Arr.resize(n_r, n_r);
    blk.Arr.setFromTriplets(trr.begin(), trr.end());
    blk.Arc.resize(n_r, n_c);
    blk.Arc.setFromTriplets(trc.begin(), trc.end());
    blk.Aib.resize(n_i, n_b);
    blk.Aib.setFromTriplets(tib.begin(), tib.end());
    blk.Abb.resize(n_b, n_b);
    blk.Abb.setFromTriplets(tbb.begin(), tbb.end());
    blk.Acc = std::move(acc);

    Eigen::SparseMatrix<T> aii(n_i, n_i);
    aii.setFromTriplets(tii.begin(), tii.end());

    blk.Arr_lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<T>>>();
    blk.Arr_lu->analyzePattern(blk.Arr);
    blk.Arr_lu->factorize(blk.Arr);
    if (blk.Arr_lu->info() != Eigen::Success)
      failures[s] = "singular remaining block A_rr in subdomain " + std::to_string(s);
    blk.Aii_lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<T>>>();
    blk.Aii_lu->analyzePattern(aii);
    blk.Aii_lu->factorize(aii);
    if (blk.Aii_lu->info() != Eigen::Success)
      failures[s] = "singular interior block A_ii in subdomain " + std::to_string(s);
  });
  for (const auto& msg : failures)
    if (!msg.empty()) throw NumericalError("assemble_subdomain_operators: " + msg);
  return blocks;
}

template <class T>
struct FetiSolver<T>::LocalWork {
  std::vector<Vector<T>> ur;  // per-subdomain remaining-DOF vectors
  Vector<T> z;                // coarse solution (corners + augmentation multipliers)
};

template <class T>
FetiSolver<T>::FetiSolver(const StructuredMesh& mesh, const Physics& physics,
                          const AssembledOperators& ops,
                          std::shared_ptr<const FetiPartition> partition, const OperatorSpec& spec,
                          const FetiConfig& config)
    : mesh_(mesh),
      physics_(physics),
      ops_(ops),
      partition_(std::move(partition)),
      spec_(spec),
      config_(config) {
  detail::WallTimer timer;
  const auto& part = *partition_;
  blocks_ = assemble_subdomain_operators<T>(mesh_, physics_, ops_, part, spec_);
  if (config_.augment) augmentation_ = build_edge_rbm_augmentation(part, physics_);
  augmentation_.n_lambda = part.n_lambda;

  const int n_q = static_cast<int>(augmentation_.columns.size());
  const int n_cg = part.n_corner_dofs;
  coarse_dim_ = n_cg + n_q;
  const int nsub = part.n_subdomains();

  // Per-subdomain restriction of the augmentation columns: C^s = Q' B^s,
  // stored as (r-position, signed value) entry lists.
  std::vector<std::vector<int>> row_to_rpos(nsub);
  std::vector<std::vector<double>> row_to_sign(nsub);
  for (int s = 0; s < nsub; ++s) {
    row_to_rpos[s].assign(part.n_lambda, -1);
    row_to_sign[s].assign(part.n_lambda, 0.0);
    const auto& sub = part.subdomains[s];
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k) {
      row_to_rpos[s][sub.lambda_rows[k]] = sub.r_boundary[k];
      row_to_sign[s][sub.lambda_rows[k]] = sub.lambda_signs[k];
    }
  }

  std::vector<DenseMatrix<T>> contribs(nsub);
  parallel_for(nsub, config_.threads, [&](int s) {
    const auto& sub = part.subdomains[s];
    auto& blk = blocks_[s];
    const int n_r = static_cast<int>(sub.r_local.size());
    const int n_c = static_cast<int>(sub.corner_local.size());
    for (int q = 0; q < n_q; ++q) {
      std::vector<std::pair<int, double>> entries;
      const auto& col = augmentation_.columns[q];
      for (std::size_t k = 0; k < col.rows.size(); ++k) {
        const int rpos = row_to_rpos[s][col.rows[k]];
        if (rpos >= 0) entries.emplace_back(rpos, row_to_sign[s][col.rows[k]] * col.values[k]);
      }
      if (!entries.empty()) {
        blk.active_aug.push_back(q);
        blk.aug_entries.push_back(std::move(entries));
      }
    }
    const int n_act = static_cast<int>(blk.active_aug.size());
    DenseMatrix<T> coupling = DenseMatrix<T>::Zero(n_r, n_c + n_act);
    coupling.leftCols(n_c) = DenseMatrix<T>(blk.Arc);
    for (int a = 0; a < n_act; ++a)
      for (const auto& [rpos, val] : blk.aug_entries[a]) coupling(rpos, n_c + a) += T(val);
    if (n_c + n_act > 0) {
      blk.coupling_solved = blk.Arr_lu->solve(coupling);
      contribs[s] = coupling.transpose() * blk.coupling_solved;
    } else {
      blk.coupling_solved.resize(n_r, 0);
      contribs[s].resize(0, 0);
    }
  });

  coarse_ = DenseMatrix<T>::Zero(coarse_dim_, coarse_dim_);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    const auto& blk = blocks_[s];
    const int n_c = static_cast<int>(sub.corner_local.size());
    const int n_act = static_cast<int>(blk.active_aug.size());
    std::vector<int> zidx(n_c + n_act);
    for (int k = 0; k < n_c; ++k) zidx[k] = sub.corner_global[k];
    for (int a = 0; a < n_act; ++a) zidx[n_c + a] = n_cg + blk.active_aug[a];
    for (int k = 0; k < n_c; ++k)
      for (int l = 0; l < n_c; ++l)
        coarse_(sub.corner_global[k], sub.corner_global[l]) += blk.Acc(k, l);
    for (int a = 0; a < n_c + n_act; ++a)
      for (int b = 0; b < n_c + n_act; ++b) coarse_(zidx[a], zidx[b]) -= contribs[s](a, b);
  }

  if (coarse_dim_ > 0) {
    // Symmetric equilibration: corner rows scale with the operator, the
    // augmentation rows with its inverse; without it the pivot check would
    // confuse scale disparity with singularity.
    coarse_scale_.resize(coarse_dim_);
    for (int i = 0; i < coarse_dim_; ++i) {
      const double dii = std::abs(coarse_(i, i));
      coarse_scale_[i] = dii > 0.0 ? 1.0 / std::sqrt(dii) : 1.0;
    }
    DenseMatrix<T> scaled = coarse_;
    for (int i = 0; i < coarse_dim_; ++i)
      for (int j = 0; j < coarse_dim_; ++j) scaled(i, j) *= T(coarse_scale_[i] * coarse_scale_[j]);
    coarse_lu_ = std::make_unique<Eigen::PartialPivLU<DenseMatrix<T>>>(scaled);
    const auto& lu = coarse_lu_->matrixLU();
    double umax = 0.0;
    for (int i = 0; i < coarse_dim_; ++i) umax = std::max(umax, std::abs(lu(i, i)));
    for (int i = 0; i < coarse_dim_; ++i)
      if (!(std::abs(lu(i, i)) > umax * 1e-13))
        throw NumericalError("feti: coarse problem is singular");
  }

  global_ = linear_combination<T>(scalar_cast<T>(Complex(spec_.stiffness_coeff)), ops_.K,
                                  scalar_cast<T>(spec_.mass_coeff), ops_.V);
  setup_seconds_ = timer.seconds();
}

template <class T>
Vector<T> FetiSolver<T>::coarse_solve(const Vector<T>& g) const {
  if (coarse_dim_ == 0) return Vector<T>();
  Vector<T> gs = g;
  for (int i = 0; i < coarse_dim_; ++i) gs[i] *= T(coarse_scale_[i]);
  Vector<T> z = coarse_lu_->solve(gs);
  for (int i = 0; i < coarse_dim_; ++i) z[i] *= T(coarse_scale_[i]);
  return z;
}

template <class T>
void FetiSolver<T>::split_rhs(const Vector<T>& rhs, std::vector<Vector<T>>& f_r,
                              Vector<T>& f_c) const {
  const auto& part = *partition_;
  const int nsub = part.n_subdomains();
  f_r.resize(nsub);
  f_c = Vector<T>::Zero(part.n_corner_dofs);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    const int n_r = static_cast<int>(sub.r_local.size());
    f_r[s].resize(n_r);
    for (int k = 0; k < n_r; ++k) {
      const int local = sub.r_local[k];
      f_r[s][k] = T(sub.weights[local]) * rhs[sub.dofs[local]];
    }
    for (std::size_t k = 0; k < sub.corner_local.size(); ++k)
      f_c[sub.corner_global[k]] = rhs[sub.dofs[sub.corner_local[k]]];
  }
}

// Block elimination shared by the dual operator, the dual rhs and the final
// recovery: given local loads t^s and the assembled corner load, returns
// u_r^s and the coarse solution of the augmented coarse problem.
template <class T>
void FetiSolver<T>::eliminate(const std::vector<Vector<T>>& t, const Vector<T>& f_c,
                              LocalWork& work) const {
  const auto& part = *partition_;
  const int nsub = part.n_subdomains();
  std::vector<Vector<T>> u1(nsub);
  parallel_for(nsub, config_.threads, [&](int s) { u1[s] = blocks_[s].Arr_lu->solve(t[s]); });

  Vector<T> g = Vector<T>::Zero(coarse_dim_);
  g.head(part.n_corner_dofs) = f_c;
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    const auto& blk = blocks_[s];
    const int n_c = static_cast<int>(sub.corner_local.size());
    if (n_c > 0) {
      Vector<T> v = blk.Arc.transpose() * u1[s];
      for (int k = 0; k < n_c; ++k) g[sub.corner_global[k]] -= v[k];
    }
    for (std::size_t a = 0; a < blk.active_aug.size(); ++a) {
      T acc{};
      for (const auto& [rpos, val] : blk.aug_entries[a]) acc += T(val) * u1[s][rpos];
      g[part.n_corner_dofs + blk.active_aug[a]] -= acc;
    }
  }
  work.z = coarse_solve(g);

  work.ur.resize(nsub);
  parallel_for(nsub, config_.threads, [&](int s) {
    const auto& sub = part.subdomains[s];
    const auto& blk = blocks_[s];
    const int n_c = static_cast<int>(sub.corner_local.size());
    const int n_act = static_cast<int>(blk.active_aug.size());
    work.ur[s] = std::move(u1[s]);
    if (n_c + n_act > 0) {
      Vector<T> z_local(n_c + n_act);
      for (int k = 0; k < n_c; ++k) z_local[k] = work.z[sub.corner_global[k]];
      for (int a = 0; a < n_act; ++a)
        z_local[n_c + a] = work.z[part.n_corner_dofs + blk.active_aug[a]];
      work.ur[s] -= blk.coupling_solved * z_local;
    }
  });
}

// sum_s B^s u^s over the multiplier rows.
template <class T>
Vector<T> FetiSolver<T>::gather_jump(const std::vector<Vector<T>>& ur) const {
  const auto& part = *partition_;
  Vector<T> out = Vector<T>::Zero(part.n_lambda);
  for (int s = 0; s < part.n_subdomains(); ++s) {
    const auto& sub = part.subdomains[s];
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k)
      out[sub.lambda_rows[k]] += T(sub.lambda_signs[k]) * ur[s][sub.r_boundary[k]];
  }
  return out;
}

template <class T>
void FetiSolver<T>::project_out_augmentation(Vector<T>& v) const {
  for (const auto& col : augmentation_.columns) {
    T coef{};
    for (std::size_t k = 0; k < col.rows.size(); ++k) coef += T(col.values[k]) * v[col.rows[k]];
    for (std::size_t k = 0; k < col.rows.size(); ++k) v[col.rows[k]] -= coef * T(col.values[k]);
  }
}

template <class T>
Vector<T> FetiSolver<T>::apply_dual_operator(const Vector<T>& lambda) const {
  const auto& part = *partition_;
  const int nsub = part.n_subdomains();
  std::vector<Vector<T>> t(nsub);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    t[s] = Vector<T>::Zero(sub.r_local.size());
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k)
      t[s][sub.r_boundary[k]] = -T(sub.lambda_signs[k]) * lambda[sub.lambda_rows[k]];
  }
  LocalWork work;
  eliminate(t, Vector<T>::Zero(part.n_corner_dofs), work);
  return -gather_jump(work.ur);
}

template <class T>
Vector<T> FetiSolver<T>::apply_dirichlet_preconditioner(const Vector<T>& residual) const {
  const auto& part = *partition_;
  const int nsub = part.n_subdomains();
  // W is the diagonal pseudo-inverse of sum_s B^s B^s'; every multiplier row
  // couples exactly two subdomains on this partition family.
  Vector<T> wr = residual / T(2.0);
  std::vector<Vector<T>> contrib(nsub);
  parallel_for(nsub, config_.threads, [&](int s) {
    const auto& sub = part.subdomains[s];
    const auto& blk = blocks_[s];
    const int n_b = static_cast<int>(sub.r_boundary.size());
    Vector<T> vb = Vector<T>::Zero(n_b);
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k)
      vb[k] = T(sub.lambda_signs[k]) * wr[sub.lambda_rows[k]];
    // S^s_bb v = A_bb v - A_ib' A_ii^{-1} A_ib v
    Vector<T> wb = blk.Abb * vb;
    if (blk.Aib.rows() > 0) {
      Vector<T> ti = blk.Aib * vb;
      ti = blk.Aii_lu->solve(ti);
      wb -= blk.Aib.transpose() * ti;
    }
    contrib[s] = std::move(wb);
  });
  Vector<T> out = Vector<T>::Zero(part.n_lambda);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k)
      out[sub.lambda_rows[k]] += T(sub.lambda_signs[k]) * contrib[s][k];
  }
  return out / T(2.0);
}

template <class T>
std::pair<Vector<T>, FetiStats> FetiSolver<T>::solve(const Vector<T>& rhs) const {
  detail::WallTimer timer;
  const auto& part = *partition_;
  const int nsub = part.n_subdomains();
  FetiStats stats;
  stats.n_lambda = part.n_lambda;
  stats.coarse_dim = coarse_dim_;
  stats.setup_seconds = setup_seconds_;

  if (rhs.size() != part.n_free) throw ContractError("feti: rhs dimension mismatch");
  if (rhs.norm() == 0.0) {
    stats.dual.converged = true;
    stats.solve_seconds = timer.seconds();
    return {Vector<T>::Zero(part.n_free), stats};
  }

  std::vector<Vector<T>> f_r;
  Vector<T> f_c;
  split_rhs(rhs, f_r, f_c);

  LocalWork work;
  eliminate(f_r, f_c, work);
  Vector<T> d = gather_jump(work.ur);
  // The coarse solve pins the augmented jump components for every multiplier,
  // so the dual problem lives in the orthogonal complement of the columns.
  project_out_augmentation(d);

  LinearOperator<T> dual_op;
  dual_op.n = part.n_lambda;
  dual_op.apply = [this](const Vector<T>& x, Vector<T>& y) {
    y = apply_dual_operator(x);
    project_out_augmentation(y);
  };
  dual_op.precondition = [this](const Vector<T>& x, Vector<T>& y) {
    y = apply_dirichlet_preconditioner(x);
  };

  Vector<T> lambda;
  bool used_cg = false;
  if constexpr (std::is_same_v<T, double>) {
    if (config_.use_cg_for_spd && spec_.is_real() && spec_.mass_coeff.real() >= 0.0) {
      CgOptions copt;
      copt.tol = config_.tol;
      copt.max_iter = config_.max_iter;
      auto [l, st] = cg(dual_op, d, copt);
      lambda = std::move(l);
      stats.dual = st;
      used_cg = true;
    }
  }
  if (!used_cg) {
    GmresOptions gopt;
    gopt.tol = config_.tol;
    gopt.max_iter = config_.max_iter;
    gopt.restart = std::max(1, config_.max_iter);
    auto [l, st] = gmres(dual_op, d, gopt);
    lambda = std::move(l);
    stats.dual = st;
  }

  std::vector<Vector<T>> t(nsub);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    t[s] = f_r[s];
    for (std::size_t k = 0; k < sub.lambda_rows.size(); ++k)
      t[s][sub.r_boundary[k]] -= T(sub.lambda_signs[k]) * lambda[sub.lambda_rows[k]];
  }
  eliminate(t, f_c, work);

  Vector<T> x = Vector<T>::Zero(part.n_free);
  for (int s = 0; s < nsub; ++s) {
    const auto& sub = part.subdomains[s];
    for (std::size_t k = 0; k < sub.corner_local.size(); ++k)
      x[sub.dofs[sub.corner_local[k]]] = work.z[sub.corner_global[k]];
    for (std::size_t k = 0; k < sub.r_local.size(); ++k) {
      const int local = sub.r_local[k];
      x[sub.dofs[local]] += T(sub.weights[local]) * work.ur[s][k];
    }
  }
  const Vector<T> jump = gather_jump(work.ur);
  stats.interface_jump = jump.size() > 0 ? jump.template lpNorm<Eigen::Infinity>() : 0.0;

  Vector<T> ax(part.n_free);
  global_.apply(x, ax);
  stats.primal_residual = (ax - rhs).norm() / rhs.norm();
  stats.solve_seconds = timer.seconds();
  return {x, stats};
}

template std::vector<SubdomainBlocks<double>> assemble_subdomain_operators<double>(
    const StructuredMesh&, const Physics&, const AssembledOperators&, const FetiPartition&,
    const OperatorSpec&);
template std::vector<SubdomainBlocks<Complex>> assemble_subdomain_operators<Complex>(
    const StructuredMesh&, const Physics&, const AssembledOperators&, const FetiPartition&,
    const OperatorSpec&);
template class FetiSolver<double>;
template class FetiSolver<Complex>;

}  // namespace pdeopt
