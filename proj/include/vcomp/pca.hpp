#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "vcomp/core.hpp"

namespace vcomp {

struct PcaBasis {
  std::vector<float> mean;            // D
  std::vector<float> basis;           // D x K, column-major (basis[d + k*D])
  std::vector<float> eigenvalues;     // K, descending
  int in_dim = 0;
  int out_dim = 0;
  bool rank_limited = false;  // sample rank fell short of the requested width

  void project(const float* raw, float* out) const {
    for (int k = 0; k < out_dim; ++k) {
      const float* col = basis.data() + size_t(k) * in_dim;
      double acc = 0.0;
      for (int d = 0; d < in_dim; ++d) acc += double(raw[d] - mean[d]) * col[d];
      out[k] = float(acc);
    }
  }

  std::vector<float> project(const std::vector<float>& raw) const {
    auto out = std::vector<float>(size_t(out_dim));
    project(raw.data(), out.data());
    return out;
  }

  double orthonormality_error() const {
    double err = 0.0;
    for (int a = 0; a < out_dim; ++a)
      for (int b = 0; b < out_dim; ++b) {
        double dot = 0.0;
        for (int d = 0; d < in_dim; ++d)
          dot += double(basis[size_t(a) * in_dim + d]) * basis[size_t(b) * in_dim + d];
        err = std::max(err, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
    return err;
  }
};

// Mean-centered top-out_dim principal directions by descending eigenvalue of
// the sample covariance. Sign convention: the largest-magnitude component of
// each direction is positive. When the sample rank is below out_dim the basis
// narrows to the rank and is flagged.
inline PcaBasis fit_pca(const std::vector<float>& samples, int n, int dim, int out_dim) {
  if (n < 2) throw std::invalid_argument("fit_pca: need at least two samples");
  if (int(samples.size()) != n * dim) throw std::invalid_argument("fit_pca: bad sample matrix");

  // Deterministic chunked accumulation in double; chunk boundaries are fixed,
  // so the reduction order does not depend on the thread count.
  const int chunk = 4096;
  int n_chunks = (n + chunk - 1) / chunk;
  std::vector<Eigen::VectorXd> sums(size_t(n_chunks), Eigen::VectorXd::Zero(dim));
  std::vector<Eigen::MatrixXd> outers(size_t(n_chunks), Eigen::MatrixXd::Zero(dim, dim));
  parallel_for(size_t(n_chunks), [&](size_t c) {
    int b = int(c) * chunk, e = std::min(n, b + chunk);
    Eigen::VectorXd x(dim);
    for (int i = b; i < e; ++i) {
      for (int d = 0; d < dim; ++d) x[d] = double(samples[size_t(i) * dim + d]);
      sums[c] += x;
      outers[c].selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
  });
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(dim, dim);
  for (int c = 0; c < n_chunks; ++c) {
    sum += sums[size_t(c)];
    outer += outers[size_t(c)];
  }
  Eigen::VectorXd mean = sum / double(n);
  Eigen::MatrixXd cov =
      (Eigen::MatrixXd(outer.selfadjointView<Eigen::Lower>()) - double(n) * mean * mean.transpose()) /
      double(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("fit_pca: eigensolver failed");
  Eigen::VectorXd evals = solver.eigenvalues();   // ascending
  Eigen::MatrixXd evecs = solver.eigenvectors();

  double max_eval = std::max(evals[dim - 1], 0.0);
  double tol = std::max(1e-9, 1e-9 * max_eval);
  int rank = 0;
  for (int i = 0; i < dim; ++i)
    if (evals[i] > tol) ++rank;

  PcaBasis out;
  out.in_dim = dim;
  out.out_dim = std::min(out_dim, rank > 0 ? rank : 1);
  out.rank_limited = out.out_dim < out_dim;
  out.mean.resize(size_t(dim));
  for (int d = 0; d < dim; ++d) out.mean[d] = float(mean[d]);
  out.basis.resize(size_t(dim) * out.out_dim);
  out.eigenvalues.resize(size_t(out.out_dim));
  for (int k = 0; k < out.out_dim; ++k) {
    int src = dim - 1 - k;  // descending
    Eigen::VectorXd v = evecs.col(src);
    int arg = 0;
    for (int d = 1; d < dim; ++d)
      if (std::abs(v[d]) > std::abs(v[arg])) arg = d;
    if (v[arg] < 0.0) v = -v;
    for (int d = 0; d < dim; ++d) out.basis[size_t(k) * dim + d] = float(v[d]);
    out.eigenvalues[size_t(k)] = float(std::max(evals[src], 0.0));
  }
  return out;
}

}  // namespace vcomp
