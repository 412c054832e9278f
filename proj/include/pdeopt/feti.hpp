#pragma once

#include <memory>

#include <Eigen/SparseLU>

#include "pdeopt/dense.hpp"
#include "pdeopt/fem.hpp"
#include "pdeopt/krylov.hpp"
#include "pdeopt/mesh.hpp"

namespace pdeopt {

/// Operator acted on by the solver: A = stiffness_coeff*K + mass_coeff*V.
struct OperatorSpec {
  double stiffness_coeff = 1.0;
  Complex mass_coeff = 0.0;

  bool is_real() const { return mass_coeff.imag() == 0.0; }
};

struct FetiConfig {
  int s_x = 2;
  int s_y = 2;
  bool augment = true;
  double tol = 1e-10;  // relative dual residual, equals the interface-jump level
  int max_iter = 1000;
  bool use_cg_for_spd = false;  // CG on the dual problem for real SPD operators
  int threads = 1;
};

/// Non-overlapping structured decomposition with corner, interface and edge
/// bookkeeping. Node categories: corner nodes sit on subdomain-grid vertices
/// and are shared by at least two subdomains; remaining shared nodes form
/// the interface carrying one Lagrange multiplier per DOF.
struct FetiPartition {
  int s_x = 0, s_y = 0;
  int ex = 0, ey = 0;  // elements per subdomain per axis (H/h)
  double h = 0.0, H_x = 0.0, H_y = 0.0;
  int dofs_per_node = 1;
  int n_free = 0;

  struct Subdomain {
    std::vector<int> elements;
    std::vector<int> dofs;  // global free-dof ids, ascending; local index = position
    std::vector<int> corner_local;   // local indices of corner DOFs
    std::vector<int> corner_global;  // global corner numbering, parallel to corner_local
    std::vector<int> r_local;        // local indices of the remaining DOFs
    std::vector<int> r_interior;     // positions into r_local
    std::vector<int> r_boundary;     // positions into r_local (interface DOFs)
    // Signed Boolean interface map: one entry per interface DOF of this
    // subdomain (parallel to r_boundary).
    std::vector<int> lambda_rows;
    std::vector<double> lambda_signs;
    std::vector<double> weights;  // 1/multiplicity per local DOF
  };
  std::vector<Subdomain> subdomains;

  struct Edge {
    int sub_lo = 0, sub_hi = 0;  // the two subdomains sharing the edge
    bool vertical = false;
    double mid_x = 0.0, mid_y = 0.0;
    std::vector<int> nodes;        // mesh node ids strictly inside the segment
    std::vector<int> lambda_rows;  // dofs_per_node rows per node
  };
  std::vector<Edge> edges;

  int n_corner_dofs = 0;
  int n_lambda = 0;
  std::vector<int> free_multiplicity;  // per global free dof

  int n_subdomains() const { return s_x * s_y; }
};

FetiPartition partition_structured(const StructuredMesh& mesh, const Physics& physics,
                                   const AssembledOperators& ops, int s_x, int s_y);

/// Edge-based rigid body modes: one constant column per edge for scalar
/// physics; two translations plus an in-plane rotation about the edge
/// midpoint for elasticity. Columns live in multiplier space and have unit
/// 2-norm.
struct AugmentationSpace {
  struct Column {
    int edge = 0;
    std::vector<int> rows;
    std::vector<double> values;
  };
  std::vector<Column> columns;
  int n_lambda = 0;
};

AugmentationSpace build_edge_rbm_augmentation(const FetiPartition& partition,
                                              const Physics& physics);

struct FetiStats {
  SolveStats dual;               // iterations of the interface Krylov loop
  double primal_residual = 0.0;  // ||A x - rhs|| / ||rhs|| on the subassembled operator
  double interface_jump = 0.0;   // max |sum_s B^s y^s|
  int n_lambda = 0;
  int coarse_dim = 0;
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
};

/// Per-subdomain blocks of A = c_K K + c_V V split by corner (c) and
/// remaining (r) DOFs, with the interior/boundary split of r used by the
/// Dirichlet preconditioner. Factorization handles are owned here.
template <class T>
struct SubdomainBlocks {
  Eigen::SparseMatrix<T> Arr, Arc, Aib, Abb;
  DenseMatrix<T> Acc;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<T>>> Arr_lu, Aii_lu;
  DenseMatrix<T> coupling_solved;  // Arr^{-1} [Arc | B' Q_active], cached for the coarse path
  std::vector<int> active_aug;     // augmentation columns with support on this subdomain
  // C^s = Q' B^s rows as (r-position, signed value) lists, parallel to active_aug
  std::vector<std::vector<std::pair<int, double>>> aug_entries;
};

template <class T>
std::vector<SubdomainBlocks<T>> assemble_subdomain_operators(const StructuredMesh& mesh,
                                                             const Physics& physics,
                                                             const AssembledOperators& ops,
                                                             const FetiPartition& partition,
                                                             const OperatorSpec& spec);

/// FETI-DP interface solver with an augmented corner coarse problem and the
/// multiplicity-scaled Dirichlet preconditioner. The dual loop is GMRES
/// (optionally CG for real SPD operators).
template <class T>
class FetiSolver {
 public:
  FetiSolver(const StructuredMesh& mesh, const Physics& physics, const AssembledOperators& ops,
             std::shared_ptr<const FetiPartition> partition, const OperatorSpec& spec,
             const FetiConfig& config);

  std::pair<Vector<T>, FetiStats> solve(const Vector<T>& rhs) const;

  Vector<T> apply_dual_operator(const Vector<T>& lambda) const;
  Vector<T> apply_dirichlet_preconditioner(const Vector<T>& residual) const;

  /// Removes the span of the augmentation columns. The augmented coarse
  /// problem enforces those jump components exactly, which makes the dual
  /// operator singular on that span; the Krylov loop runs deflated.
  void project_out_augmentation(Vector<T>& v) const;

  int n_lambda() const { return partition_->n_lambda; }
  int coarse_dim() const { return coarse_dim_; }
  const FetiPartition& partition() const { return *partition_; }
  const SubdomainBlocks<T>& blocks(int s) const { return blocks_[s]; }
  double setup_seconds() const { return setup_seconds_; }

 private:
  struct LocalWork;

  void split_rhs(const Vector<T>& rhs, std::vector<Vector<T>>& f_r, Vector<T>& f_c) const;
  Vector<T> coarse_solve(const Vector<T>& g) const;
  void eliminate(const std::vector<Vector<T>>& t, const Vector<T>& f_c, LocalWork& work) const;
  Vector<T> gather_jump(const std::vector<Vector<T>>& ur) const;

  const StructuredMesh& mesh_;
  Physics physics_;
  const AssembledOperators& ops_;
  std::shared_ptr<const FetiPartition> partition_;
  OperatorSpec spec_;
  FetiConfig config_;
  AugmentationSpace augmentation_;
  std::vector<SubdomainBlocks<T>> blocks_;
  DenseMatrix<T> coarse_;  // assembled corner + augmentation coarse matrix
  std::vector<double> coarse_scale_;
  std::unique_ptr<Eigen::PartialPivLU<DenseMatrix<T>>> coarse_lu_;
  CsrMatrix<T> global_;  // subassembled operator, for the primal residual
  int coarse_dim_ = 0;
  double setup_seconds_ = 0.0;
};

using RealFetiSolver = FetiSolver<double>;
using ComplexFetiSolver = FetiSolver<Complex>;

}  // namespace pdeopt
