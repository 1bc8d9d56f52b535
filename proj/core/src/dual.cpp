#include "blockipm/dual.hpp"

namespace blockipm {

void db_set_const(DualBatch& out, index_t io, double c) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  for (index_t j = 0; j < M; ++j) ov[j] = c;
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    for (index_t j = 0; j < M; ++j) ot[j] = 0.0;
  }
}

void db_set_const_per_column(DualBatch& out, index_t io, const double* c) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  for (index_t j = 0; j < M; ++j) ov[j] = c[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    for (index_t j = 0; j < M; ++j) ot[j] = 0.0;
  }
}

void db_copy(DualBatch& out, index_t io, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  for (index_t j = 0; j < M; ++j) ov[j] = av[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] = at[j];
  }
}

void db_add(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b,
            index_t ib) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  const double* bv = b.v(ib);
  for (index_t j = 0; j < M; ++j) ov[j] = av[j] + bv[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    const double* bt = b.t(ib, k);
    for (index_t j = 0; j < M; ++j) ot[j] = at[j] + bt[j];
  }
}

void db_sub(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b,
            index_t ib) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  const double* bv = b.v(ib);
  for (index_t j = 0; j < M; ++j) ov[j] = av[j] - bv[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    const double* bt = b.t(ib, k);
    for (index_t j = 0; j < M; ++j) ot[j] = at[j] - bt[j];
  }
}

void db_scale(DualBatch& out, index_t io, double c) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  for (index_t j = 0; j < M; ++j) ov[j] *= c;
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    for (index_t j = 0; j < M; ++j) ot[j] *= c;
  }
}

void db_scale_per_column(DualBatch& out, index_t io, const double* c) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  for (index_t j = 0; j < M; ++j) ov[j] *= c[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    for (index_t j = 0; j < M; ++j) ot[j] *= c[j];
  }
}

void db_mul(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b,
            index_t ib) {
  const index_t M = out.columns(), p = out.lanes();
  const double* av = a.v(ia);
  const double* bv = b.v(ib);
  double* ov = out.v(io);
  // Tangents first: they read the operand values, which an in-place call
  // would otherwise have overwritten.
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    const double* bt = b.t(ib, k);
    for (index_t j = 0; j < M; ++j) ot[j] = av[j] * bt[j] + at[j] * bv[j];
  }
  for (index_t j = 0; j < M; ++j) ov[j] = av[j] * bv[j];
}

void db_square(DualBatch& out, index_t io, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  const double* av = a.v(ia);
  double* ov = out.v(io);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] = 2.0 * av[j] * at[j];
  }
  for (index_t j = 0; j < M; ++j) ov[j] = av[j] * av[j];
}

void db_sin(DualBatch& out, index_t io, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  const double* av = a.v(ia);
  double* ov = out.v(io);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] = std::cos(av[j]) * at[j];
  }
  for (index_t j = 0; j < M; ++j) ov[j] = std::sin(av[j]);
}

void db_cos(DualBatch& out, index_t io, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  const double* av = a.v(ia);
  double* ov = out.v(io);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] = -std::sin(av[j]) * at[j];
  }
  for (index_t j = 0; j < M; ++j) ov[j] = std::cos(av[j]);
}

void db_axpy(DualBatch& out, index_t io, double c, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  for (index_t j = 0; j < M; ++j) ov[j] += c * av[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] += c * at[j];
  }
}

void db_axpy_per_column(DualBatch& out, index_t io, const double* c, const DualBatch& a,
                        index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  for (index_t j = 0; j < M; ++j) ov[j] += c[j] * av[j];
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] += c[j] * at[j];
  }
}

void db_sum_of_squares(DualBatch& out, index_t io, const DualBatch& a, index_t ia,
                       const DualBatch& b, index_t ib) {
  const index_t M = out.columns(), p = out.lanes();
  const double* av = a.v(ia);
  const double* bv = b.v(ib);
  double* ov = out.v(io);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    const double* bt = b.t(ib, k);
    for (index_t j = 0; j < M; ++j)
      ot[j] = 2.0 * (av[j] * at[j] + bv[j] * bt[j]);
  }
  for (index_t j = 0; j < M; ++j) ov[j] = av[j] * av[j] + bv[j] * bv[j];
}

void db_waxpby(DualBatch& out, index_t io, const double* w, const DualBatch& a, index_t ia,
               const DualBatch& b, index_t ib) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  const double* bv = b.v(ib);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    const double* bt = b.t(ib, k);
    for (index_t j = 0; j < M; ++j)
      ot[j] += w[j] * (av[j] * bt[j] + at[j] * bv[j]);
  }
  for (index_t j = 0; j < M; ++j) ov[j] += w[j] * av[j] * bv[j];
}

void db_waxpy(DualBatch& out, index_t io, const double* w, const DualBatch& a, index_t ia) {
  const index_t M = out.columns(), p = out.lanes();
  double* ov = out.v(io);
  const double* av = a.v(ia);
  for (index_t k = 0; k < p; ++k) {
    double* ot = out.t(io, k);
    const double* at = a.t(ia, k);
    for (index_t j = 0; j < M; ++j) ot[j] += w[j] * at[j];
  }
  for (index_t j = 0; j < M; ++j) ov[j] += w[j] * av[j];
}

}  // namespace blockipm
