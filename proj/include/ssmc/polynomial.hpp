#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ssmc {

using cplx = std::complex<double>;

struct VarPower {
    int var = 0;
    int power = 0;
    friend bool operator==(const VarPower&, const VarPower&) = default;
    friend auto operator<=>(const VarPower&, const VarPower&) = default;
};

// One monomial `coeff * prod x[var]^power` contributing to output `out`.
struct PolyTerm {
    int out = 0;
    double coeff = 0.0;
    std::vector<VarPower> exps;

    int degree() const;
};

// Sparse vector-valued polynomial R^dim_in -> R^dim_out with every monomial of
// total degree >= 2. Terms are canonicalized on construction: exponents sorted
// by variable with repeated variables merged, terms sorted by (out, exps), and
// duplicate keys summed. Terms whose merged coefficient is exactly zero are
// dropped.
class PolynomialMap {
public:
    PolynomialMap() = default;
    PolynomialMap(int dim_in, int dim_out, std::vector<PolyTerm> terms = {});

    int dim_in() const { return dim_in_; }
    int dim_out() const { return dim_out_; }
    bool empty() const { return terms_.empty(); }
    std::span<const PolyTerm> terms() const { return terms_; }
    // Terms contributing to output `i`, contiguous in canonical order.
    std::span<const PolyTerm> terms_for_output(int i) const;

    // Smallest / largest total degree among terms (2 / 0 for the empty map).
    int min_degree() const;
    int max_degree() const;

    Eigen::VectorXcd eval(const Eigen::VectorXcd& z) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& z) const;

    // Re-embeds this map into a larger space: input variables keep their
    // indices, output i becomes out_offset + i, coefficients are multiplied
    // by `scale`.
    PolynomialMap embedded(int new_dim_in, int new_dim_out, int out_offset, double scale) const;

    friend bool operator==(const PolynomialMap& a, const PolynomialMap& b) {
        return a.dim_in_ == b.dim_in_ && a.dim_out_ == b.dim_out_ && a.terms_ == b.terms_;
    }

private:
    int dim_in_ = 0;
    int dim_out_ = 0;
    std::vector<PolyTerm> terms_;
    std::vector<std::size_t> offsets_; // size dim_out + 1
};

inline bool operator==(const PolyTerm& a, const PolyTerm& b) {
    return a.out == b.out && a.coeff == b.coeff && a.exps == b.exps;
}

using MultiIndex = std::vector<int>;

// All multi-indices k in N0^dim with |k| <= max_order, graded by total degree
// and lexicographically descending inside one degree, e.g. for dim = 2:
// (0,0) (1,0) (0,1) (2,0) (1,1) (0,2) ...
class MultiIndexSet {
public:
    MultiIndexSet() = default;
    MultiIndexSet(int dim, int max_order);

    int dim() const { return dim_; }
    int max_order() const { return max_order_; }
    int size() const { return static_cast<int>(indices_.size()); }

    const MultiIndex& at(int idx) const { return indices_[static_cast<std::size_t>(idx)]; }
    int order_of(int idx) const { return orders_[static_cast<std::size_t>(idx)]; }
    // -1 if k is not in the set.
    int index_of(const MultiIndex& k) const;
    // Half-open index range [begin, end) of multi-indices with |k| = order.
    int order_begin(int order) const { return order_start_[static_cast<std::size_t>(order)]; }
    int order_end(int order) const { return order_start_[static_cast<std::size_t>(order) + 1]; }
    // Index of at(a) + at(b), or -1 if the sum exceeds max_order.
    int sum_index(int a, int b) const { return sum_table_[static_cast<std::size_t>(a) * indices_.size() + static_cast<std::size_t>(b)]; }
    // Index of the multi-index with each coordinate pair (2i, 2i+1) swapped.
    // Requires an even dimension.
    int conjugate_index(int idx) const { return conj_[static_cast<std::size_t>(idx)]; }
    // Unit multi-index e_j.
    int unit_index(int j) const { return 1 + j; }

    // Values p^k for every k in the set, built incrementally.
    Eigen::VectorXcd monomials(const Eigen::VectorXcd& p) const;

private:
    std::uint64_t key(const MultiIndex& k) const;

    int dim_ = 0;
    int max_order_ = 0;
    std::vector<MultiIndex> indices_;
    std::vector<int> orders_;
    std::vector<int> order_start_;
    std::vector<int> sum_table_;
    std::vector<int> conj_;
    // For monomial evaluation: parent index and the variable multiplied in.
    std::vector<int> parent_;
    std::vector<int> parent_var_;
    std::unordered_map<std::uint64_t, int> lookup_;
};

// Truncated product of two polynomials stored as coefficient vectors over `set`.
Eigen::VectorXcd truncated_product(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, const MultiIndexSet& set,
                                   int max_order);

// Coefficients of F(W(p)) truncated at `max_order`, where row v of `w` holds the
// coefficients of the scalar polynomial W_v(p) over `set` (columns = set
// indices). Result has F.dim_out() rows. Uses the OpenMP kernel.
Eigen::MatrixXcd compose(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set, int max_order);

} // namespace ssmc
