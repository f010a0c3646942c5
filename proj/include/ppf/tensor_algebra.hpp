#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ppf {

/// A word over the alphabet {0..d}; letter 0 is the time direction.
using Word = std::vector<std::uint8_t>;

/// Brownian grade: word length plus the number of zero letters.
int word_grade(const Word& w);
std::string word_to_string(const Word& w);
Word word_from_string(const std::string& s);

/// All words of grade <= m over {0..d}, graded-lexicographic, plus the
/// truncated concatenation table. Shared between tensors of equal (d, m).
class WordBasis {
public:
    static std::shared_ptr<const WordBasis> get(int d, int m);

    int d() const { return d_; }
    int m() const { return m_; }
    std::size_t size() const { return words_.size(); }
    const Word& word(std::size_t i) const { return words_[i]; }
    int grade(std::size_t i) const { return grades_[i]; }
    /// -1 when the word is absent (grade too high or bad letter).
    long index(const Word& w) const;

    struct Product {
        std::uint32_t a, b, c;
    };
    /// Every (a, b) with grade(a) + grade(b) <= m and c = index(a ++ b).
    const std::vector<Product>& products() const { return products_; }

    WordBasis(int d, int m);

private:
    std::uint64_t key(const Word& w) const;

    int d_, m_;
    std::vector<Word> words_;
    std::vector<int> grades_;
    std::map<std::uint64_t, std::size_t> index_;
    std::vector<Product> products_;
};

/// Element of the truncated tensor algebra T^{(m)}(R^{d+1}).
class GradedTensor {
public:
    GradedTensor(int d, int m);
    explicit GradedTensor(std::shared_ptr<const WordBasis> basis);

    static GradedTensor scalar(int d, int m, double c);
    static GradedTensor letter(int d, int m, int i, double c = 1.0);

    int d() const { return basis_->d(); }
    int m() const { return basis_->m(); }
    const WordBasis& basis() const { return *basis_; }
    const std::shared_ptr<const WordBasis>& basis_ptr() const { return basis_; }

    const std::vector<double>& coeffs() const { return c_; }
    std::vector<double>& coeffs() { return c_; }

    double scalar_part() const { return c_[0]; }
    /// Coefficient of e_w; zero for words above the cap.
    double coeff(const Word& w) const;
    void set(const Word& w, double v);

    GradedTensor& operator+=(const GradedTensor& o);
    GradedTensor& operator-=(const GradedTensor& o);
    GradedTensor& operator*=(double s);

    /// Same (d) at a different cap: drops or zero-fills coefficients.
    GradedTensor retruncate(int m) const;

private:
    void check_compatible(const GradedTensor& o) const;

    std::shared_ptr<const WordBasis> basis_;
    std::vector<double> c_;
};

GradedTensor operator+(GradedTensor a, const GradedTensor& b);
GradedTensor operator-(GradedTensor a, const GradedTensor& b);
GradedTensor operator*(double s, GradedTensor a);

GradedTensor tensor_mul(const GradedTensor& a, const GradedTensor& b);
GradedTensor lie_bracket(const GradedTensor& a, const GradedTensor& b);
GradedTensor exp_trunc(const GradedTensor& a);
GradedTensor log_trunc(const GradedTensor& a);

/// <T, a>: multiplies the coefficient of e_I by T^{||I||/2}.
GradedTensor scale_tensor(const GradedTensor& a, double T);

/// Piecewise-linear path given by its segment increments; each increment has
/// d+1 entries with the time increment first.
using PathIncrements = std::vector<Eigen::VectorXd>;

GradedTensor path_signature(const PathIncrements& path, int m);

/// exp(T e_0 + (T/2) sum_i e_i e_i) truncated at m.
GradedTensor expected_brownian_signature(int d, int m, double T);

// Lyndon words and their standard bracketing ------------------------------

bool is_lyndon(const Word& w);
/// Lyndon words of grade <= m over {0..d}, in graded-lexicographic order.
std::vector<Word> lyndon_words(int d, int m);
/// Standard factorization w = u v with v the longest proper Lyndon suffix.
std::pair<Word, Word> lyndon_split(const Word& w);
/// Bracket polynomial P_w in T^{(m)}.
GradedTensor lyndon_bracket(const Word& w, int d, int m);

/// Lie element stored by its coefficients on the Lyndon bracket basis.
class LiePolynomial {
public:
    LiePolynomial() = default;
    explicit LiePolynomial(int d) : d_(d) {}

    int d() const { return d_; }
    const std::map<Word, double>& coefficients() const { return coef_; }
    void add(const Word& lyndon, double c);
    double coeff(const Word& lyndon) const;

    /// Sum of c_w P_w truncated at m.
    GradedTensor to_tensor(int m) const;

    /// Projects a tensor onto the Lyndon brackets; throws DomainError when the
    /// least-squares residual exceeds tol (not a Lie element).
    static LiePolynomial from_tensor(const GradedTensor& t, double tol = 1e-12);

    /// <T, L> in Lyndon coordinates (each P_w is homogeneous of grade ||w||).
    LiePolynomial scaled(double T) const;

private:
    int d_ = 0;
    std::map<Word, double> coef_;
};

/// Residual of the Lyndon projection; zero (to roundoff) iff t is Lie.
double lie_membership_residual(const GradedTensor& t);

struct CubatureReport {
    int degree = 0;
    double max_deviation = 0.0;
    Word argmax;  // word attaining max_deviation
    bool pass = false;
};

/// Compares sum_j lambda_j exp(<T, L_j>) with the expected Brownian signature
/// on every word of grade <= m.
CubatureReport verify_lie_cubature(const std::vector<double>& weights,
                                   const std::vector<LiePolynomial>& lie_polys, int d, int m,
                                   double T, double tol);

}  // namespace ppf
