#include "ssmc/kernels.hpp"

#include "ssmc/errors.hpp"

namespace ssmc::kernels {

namespace {

template <class Vec>
typename Vec::Scalar eval_output(const PolynomialMap& f, const Vec& z, int i) {
    using Scalar = typename Vec::Scalar;
    Scalar acc(0.0);
    for (const auto& t : f.terms_for_output(i)) {
        Scalar m(t.coeff);
        for (const auto& vp : t.exps) {
            const Scalar x = z(vp.var);
            Scalar pw = x;
            for (int k = 1; k < vp.power; ++k) pw *= x;
            m *= pw;
        }
        acc += m;
    }
    return acc;
}

template <class Vec>
void check_eval_dims(const PolynomialMap& f, const Vec& z) {
    if (z.size() != f.dim_in()) throw PreconditionError("polynomial evaluation: input dimension mismatch");
}

template <class Vec>
void eval_serial_impl(const PolynomialMap& f, const Vec& z, Vec& out) {
    check_eval_dims(f, z);
    out.setZero(f.dim_out());
    for (int i = 0; i < f.dim_out(); ++i) out(i) = eval_output(f, z, i);
}

template <class Vec>
void eval_omp_impl(const PolynomialMap& f, const Vec& z, Vec& out) {
    check_eval_dims(f, z);
    out.setZero(f.dim_out());
    const int n = f.dim_out();
#pragma omp parallel for schedule(static) if (f.terms().size() > 4096)
    for (int i = 0; i < n; ++i) out(i) = eval_output(f, z, i);
}

// Row `v` of the truncated composition: sum over the output's terms of
// coeff * prod_j W_{var_j}(p)^{power_j}.
Eigen::VectorXcd compose_output(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set,
                                int max_order, int i) {
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(set.size());
    for (const auto& t : f.terms_for_output(i)) {
        Eigen::VectorXcd prod;
        bool zero = false;
        bool first = true;
        for (const auto& vp : t.exps) {
            const Eigen::VectorXcd row = w.row(vp.var).transpose();
            if (row.isZero(0.0)) {
                zero = true;
                break;
            }
            for (int k = 0; k < vp.power; ++k) {
                if (first) {
                    prod = row;
                    first = false;
                } else {
                    prod = truncated_product(prod, row, set, max_order);
                }
            }
        }
        if (zero || first) continue;
        acc += t.coeff * prod;
    }
    return acc;
}

void check_compose_dims(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set, int max_order) {
    if (w.rows() != f.dim_in() || w.cols() != set.size())
        throw PreconditionError("compose: coefficient matrix has wrong shape");
    if (max_order > set.max_order()) throw PreconditionError("compose: truncation order exceeds multi-index set");
}

Eigen::MatrixXcd eval_expansion_check(const Eigen::MatrixXcd& coeffs, const MultiIndexSet& set,
                                      const Eigen::MatrixXcd& points) {
    if (coeffs.cols() != set.size() || points.rows() != set.dim())
        throw PreconditionError("eval_expansion: dimension mismatch");
    return Eigen::MatrixXcd(coeffs.rows(), points.cols());
}

} // namespace

void eval_polynomial_serial(const PolynomialMap& f, const Eigen::VectorXcd& z, Eigen::VectorXcd& out) {
    eval_serial_impl(f, z, out);
}
void eval_polynomial_omp(const PolynomialMap& f, const Eigen::VectorXcd& z, Eigen::VectorXcd& out) {
    eval_omp_impl(f, z, out);
}
void eval_polynomial_serial(const PolynomialMap& f, const Eigen::VectorXd& z, Eigen::VectorXd& out) {
    eval_serial_impl(f, z, out);
}
void eval_polynomial_omp(const PolynomialMap& f, const Eigen::VectorXd& z, Eigen::VectorXd& out) {
    eval_omp_impl(f, z, out);
}

Eigen::MatrixXcd compose_serial(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set,
                                int max_order) {
    check_compose_dims(f, w, set, max_order);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(f.dim_out(), set.size());
    for (int i = 0; i < f.dim_out(); ++i) out.row(i) = compose_output(f, w, set, max_order, i).transpose();
    return out;
}

Eigen::MatrixXcd compose_omp(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set,
                             int max_order) {
    check_compose_dims(f, w, set, max_order);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(f.dim_out(), set.size());
    const int n = f.dim_out();
#pragma omp parallel for schedule(dynamic, 16) if (f.terms().size() > 256)
    for (int i = 0; i < n; ++i) out.row(i) = compose_output(f, w, set, max_order, i).transpose();
    return out;
}

Eigen::MatrixXcd eval_expansion_serial(const Eigen::MatrixXcd& coeffs, const MultiIndexSet& set,
                                       const Eigen::MatrixXcd& points) {
    Eigen::MatrixXcd out = eval_expansion_check(coeffs, set, points);
    for (Eigen::Index j = 0; j < points.cols(); ++j) out.col(j) = coeffs * set.monomials(points.col(j));
    return out;
}

Eigen::MatrixXcd eval_expansion_omp(const Eigen::MatrixXcd& coeffs, const MultiIndexSet& set,
                                    const Eigen::MatrixXcd& points) {
    Eigen::MatrixXcd out = eval_expansion_check(coeffs, set, points);
    const auto cols = points.cols();
#pragma omp parallel for schedule(static) if (cols * coeffs.rows() > 20000)
    for (Eigen::Index j = 0; j < cols; ++j) out.col(j) = coeffs * set.monomials(points.col(j));
    return out;
}

namespace {

double transfer_gap_at(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& Bext,
                       const Eigen::MatrixXcd& C, const Eigen::MatrixXcd& CV, const Eigen::VectorXcd& lambda,
                       const Eigen::MatrixXcd& UB, double w) {
    const cplx s(0.0, w);
    const Eigen::MatrixXcd full = C * (s * B - A).partialPivLu().solve(Bext);
    const Eigen::VectorXcd inv = (s - lambda.array()).inverse().matrix();
    const Eigen::MatrixXcd modal = CV * inv.asDiagonal() * UB;
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(full - modal).singularValues()(0);
}

} // namespace

std::vector<double> transfer_gap_serial(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& Bext,
                                        const Eigen::MatrixXcd& C, const Eigen::MatrixXcd& CV,
                                        const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& UB,
                                        std::span<const double> omegas) {
    std::vector<double> out(omegas.size());
    for (std::size_t j = 0; j < omegas.size(); ++j) out[j] = transfer_gap_at(A, B, Bext, C, CV, lambda, UB, omegas[j]);
    return out;
}

std::vector<double> transfer_gap_omp(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& Bext,
                                     const Eigen::MatrixXcd& C, const Eigen::MatrixXcd& CV,
                                     const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& UB,
                                     std::span<const double> omegas) {
    std::vector<double> out(omegas.size());
    const auto n = static_cast<long>(omegas.size());
#pragma omp parallel for schedule(dynamic) if (n > 8)
    for (long j = 0; j < n; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        out[uj] = transfer_gap_at(A, B, Bext, C, CV, lambda, UB, omegas[uj]);
    }
    return out;
}

} // namespace ssmc::kernels
