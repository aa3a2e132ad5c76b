#include "ssmc/polynomial.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "ssmc/errors.hpp"
#include "ssmc/kernels.hpp"

namespace ssmc {

int PolyTerm::degree() const {
    int d = 0;
    for (const auto& vp : exps) d += vp.power;
    return d;
}

PolynomialMap::PolynomialMap(int dim_in, int dim_out, std::vector<PolyTerm> terms)
    : dim_in_(dim_in), dim_out_(dim_out) {
    if (dim_in < 0 || dim_out < 0) throw ModelError("polynomial map: negative dimension");

    for (auto& t : terms) {
        if (t.out < 0 || t.out >= dim_out) {
            std::ostringstream msg;
            msg << "polynomial term output index " << t.out << " outside [0, " << dim_out << ")";
            throw ModelError(msg.str());
        }
        for (const auto& vp : t.exps) {
            if (vp.var < 0 || vp.var >= dim_in) {
                std::ostringstream msg;
                msg << "polynomial term variable index " << vp.var << " outside [0, " << dim_in << ")";
                throw ModelError(msg.str());
            }
            if (vp.power < 0) throw ModelError("polynomial term with negative exponent");
        }
        std::sort(t.exps.begin(), t.exps.end());
        std::vector<VarPower> merged;
        for (const auto& vp : t.exps) {
            if (vp.power == 0) continue;
            if (!merged.empty() && merged.back().var == vp.var)
                merged.back().power += vp.power;
            else
                merged.push_back(vp);
        }
        t.exps = std::move(merged);
        if (t.degree() < 2) {
            std::ostringstream msg;
            msg << "polynomial term for output " << t.out << " has total degree " << t.degree()
                << " (nonlinear part must start at degree 2)";
            throw ModelError(msg.str());
        }
    }

    std::sort(terms.begin(), terms.end(), [](const PolyTerm& a, const PolyTerm& b) {
        if (a.out != b.out) return a.out < b.out;
        return a.exps < b.exps;
    });
    for (auto& t : terms) {
        if (!terms_.empty() && terms_.back().out == t.out && terms_.back().exps == t.exps)
            terms_.back().coeff += t.coeff;
        else
            terms_.push_back(std::move(t));
    }
    std::erase_if(terms_, [](const PolyTerm& t) { return t.coeff == 0.0; });

    offsets_.assign(static_cast<std::size_t>(dim_out_) + 1, 0);
    for (const auto& t : terms_) ++offsets_[static_cast<std::size_t>(t.out) + 1];
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
}

std::span<const PolyTerm> PolynomialMap::terms_for_output(int i) const {
    if (offsets_.empty()) return {};
    const auto b = offsets_[static_cast<std::size_t>(i)];
    const auto e = offsets_[static_cast<std::size_t>(i) + 1];
    return std::span<const PolyTerm>(terms_).subspan(b, e - b);
}

int PolynomialMap::min_degree() const {
    int d = 2;
    bool first = true;
    for (const auto& t : terms_) {
        d = first ? t.degree() : std::min(d, t.degree());
        first = false;
    }
    return d;
}

int PolynomialMap::max_degree() const {
    int d = 0;
    for (const auto& t : terms_) d = std::max(d, t.degree());
    return d;
}

Eigen::VectorXcd PolynomialMap::eval(const Eigen::VectorXcd& z) const {
    Eigen::VectorXcd out;
    kernels::eval_polynomial_omp(*this, z, out);
    return out;
}

Eigen::VectorXd PolynomialMap::eval(const Eigen::VectorXd& z) const {
    Eigen::VectorXd out;
    kernels::eval_polynomial_omp(*this, z, out);
    return out;
}

PolynomialMap PolynomialMap::embedded(int new_dim_in, int new_dim_out, int out_offset, double scale) const {
    if (new_dim_in < dim_in_ || out_offset < 0 || out_offset + dim_out_ > new_dim_out)
        throw PreconditionError("PolynomialMap::embedded: target space too small");
    std::vector<PolyTerm> terms = terms_;
    for (auto& t : terms) {
        t.out += out_offset;
        t.coeff *= scale;
    }
    return PolynomialMap(new_dim_in, new_dim_out, std::move(terms));
}

// ---------------------------------------------------------------------------

MultiIndexSet::MultiIndexSet(int dim, int max_order) : dim_(dim), max_order_(max_order) {
    if (dim <= 0 || max_order < 0) throw PreconditionError("MultiIndexSet: need dim > 0 and max_order >= 0");
    order_start_.push_back(0);
    for (int order = 0; order <= max_order; ++order) {
        // Lexicographically descending compositions of `order` into `dim` parts.
        MultiIndex k(static_cast<std::size_t>(dim), 0);
        k[0] = order;
        while (true) {
            indices_.push_back(k);
            orders_.push_back(order);
            // Next composition in descending lex order.
            int i = dim - 2;
            while (i >= 0 && k[static_cast<std::size_t>(i)] == 0) --i;
            if (i < 0) break;
            const int tail = k[static_cast<std::size_t>(dim) - 1];
            k[static_cast<std::size_t>(i)] -= 1;
            k[static_cast<std::size_t>(dim) - 1] = 0;
            k[static_cast<std::size_t>(i) + 1] = tail + 1;
        }
        order_start_.push_back(static_cast<int>(indices_.size()));
    }
    for (int i = 0; i < size(); ++i) lookup_.emplace(key(indices_[static_cast<std::size_t>(i)]), i);

    const auto n = indices_.size();
    sum_table_.assign(n * n, -1);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            if (orders_[a] + orders_[b] > max_order) continue;
            MultiIndex s = indices_[a];
            for (std::size_t d = 0; d < s.size(); ++d) s[d] += indices_[b][d];
            sum_table_[a * n + b] = index_of(s);
        }
    }

    conj_.assign(n, -1);
    if (dim % 2 == 0) {
        for (std::size_t a = 0; a < n; ++a) {
            MultiIndex s = indices_[a];
            for (std::size_t d = 0; d + 1 < s.size(); d += 2) std::swap(s[d], s[d + 1]);
            conj_[a] = index_of(s);
        }
    }

    parent_.assign(n, -1);
    parent_var_.assign(n, -1);
    for (std::size_t a = 1; a < n; ++a) {
        MultiIndex s = indices_[a];
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (s[d] > 0) {
                s[d] -= 1;
                parent_[a] = index_of(s);
                parent_var_[a] = static_cast<int>(d);
                break;
            }
        }
    }
}

std::uint64_t MultiIndexSet::key(const MultiIndex& k) const {
    std::uint64_t h = 0;
    const auto base = static_cast<std::uint64_t>(max_order_) + 1;
    for (int v : k) h = h * base + static_cast<std::uint64_t>(v);
    return h;
}

int MultiIndexSet::index_of(const MultiIndex& k) const {
    if (static_cast<int>(k.size()) != dim_) return -1;
    int total = 0;
    for (int v : k) {
        if (v < 0) return -1;
        total += v;
    }
    if (total > max_order_) return -1;
    auto it = lookup_.find(key(k));
    return it == lookup_.end() ? -1 : it->second;
}

Eigen::VectorXcd MultiIndexSet::monomials(const Eigen::VectorXcd& p) const {
    if (p.size() != dim_) throw PreconditionError("MultiIndexSet::monomials: dimension mismatch");
    Eigen::VectorXcd m(size());
    m(0) = 1.0;
    for (int a = 1; a < size(); ++a) m(a) = m(parent_[static_cast<std::size_t>(a)]) * p(parent_var_[static_cast<std::size_t>(a)]);
    return m;
}

Eigen::VectorXcd truncated_product(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, const MultiIndexSet& set,
                                   int max_order) {
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(set.size());
    for (int i = 0; i < set.size(); ++i) {
        if (a(i) == cplx(0.0)) continue;
        for (int j = 0; j < set.size(); ++j) {
            if (b(j) == cplx(0.0)) continue;
            if (set.order_of(i) + set.order_of(j) > max_order) continue;
            const int s = set.sum_index(i, j);
            if (s >= 0) c(s) += a(i) * b(j);
        }
    }
    return c;
}

Eigen::MatrixXcd compose(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set, int max_order) {
    return kernels::compose_omp(f, w, set, max_order);
}

} // namespace ssmc
