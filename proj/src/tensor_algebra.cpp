#include "ppf/tensor_algebra.hpp"

#include "ppf/error.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <tuple>

namespace ppf {

int word_grade(const Word& w) {
    int g = static_cast<int>(w.size());
    for (auto c : w)
        if (c == 0) ++g;
    return g;
}

std::string word_to_string(const Word& w) {
    if (w.empty()) return "()";
    std::string s;
    for (auto c : w) s.push_back(static_cast<char>('0' + c));
    return s;
}

Word word_from_string(const std::string& s) {
    Word w;
    if (s == "()") return w;
    for (char ch : s) {
        if (ch < '0' || ch > '9') throw DomainError("word_from_string: bad letter in '" + s + "'");
        w.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    return w;
}

namespace {

bool graded_less(const Word& a, const Word& b) {
    const int ga = word_grade(a), gb = word_grade(b);
    if (ga != gb) return ga < gb;
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

void enumerate_words(int d, int m, Word& cur, std::vector<Word>& out) {
    out.push_back(cur);
    const int g = word_grade(cur);
    for (int c = 0; c <= d; ++c) {
        if (g + (c == 0 ? 2 : 1) > m) continue;
        cur.push_back(static_cast<std::uint8_t>(c));
        enumerate_words(d, m, cur, out);
        cur.pop_back();
    }
}

}  // namespace

WordBasis::WordBasis(int d, int m) : d_(d), m_(m) {
    if (d < 1 || d > 9) throw DomainError("WordBasis: d must be in 1..9");
    if (m < 0) throw DomainError("WordBasis: negative degree");
    Word cur;
    enumerate_words(d, m, cur, words_);
    std::sort(words_.begin(), words_.end(), graded_less);
    grades_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        grades_.push_back(word_grade(words_[i]));
        index_.emplace(key(words_[i]), i);
    }
    for (std::size_t a = 0; a < words_.size(); ++a) {
        for (std::size_t b = 0; b < words_.size(); ++b) {
            if (grades_[a] + grades_[b] > m) continue;
            Word w = words_[a];
            w.insert(w.end(), words_[b].begin(), words_[b].end());
            products_.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                                 static_cast<std::uint32_t>(index(w))});
        }
    }
}

std::uint64_t WordBasis::key(const Word& w) const {
    std::uint64_t k = 0;
    for (auto c : w) k = k * static_cast<std::uint64_t>(d_ + 2) + (c + 1u);
    return k;
}

long WordBasis::index(const Word& w) const {
    for (auto c : w)
        if (c > d_) return -1;
    if (word_grade(w) > m_) return -1;
    auto it = index_.find(key(w));
    return it == index_.end() ? -1 : static_cast<long>(it->second);
}

std::shared_ptr<const WordBasis> WordBasis::get(int d, int m) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const WordBasis>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{d, m}];
    if (!slot) slot = std::make_shared<WordBasis>(d, m);
    return slot;
}

GradedTensor::GradedTensor(int d, int m) : GradedTensor(WordBasis::get(d, m)) {}

GradedTensor::GradedTensor(std::shared_ptr<const WordBasis> basis)
    : basis_(std::move(basis)), c_(basis_->size(), 0.0) {}

GradedTensor GradedTensor::scalar(int d, int m, double c) {
    GradedTensor t(d, m);
    t.c_[0] = c;
    return t;
}

GradedTensor GradedTensor::letter(int d, int m, int i, double c) {
    GradedTensor t(d, m);
    t.set(Word{static_cast<std::uint8_t>(i)}, c);
    return t;
}

double GradedTensor::coeff(const Word& w) const {
    const long i = basis_->index(w);
    return i < 0 ? 0.0 : c_[i];
}

void GradedTensor::set(const Word& w, double v) {
    const long i = basis_->index(w);
    if (i < 0) throw DomainError("GradedTensor::set: word " + word_to_string(w) + " above the cap");
    c_[i] = v;
}

void GradedTensor::check_compatible(const GradedTensor& o) const {
    if (basis_ != o.basis_) {
        if (d() != o.d()) throw DomainError("GradedTensor: alphabet mismatch");
        throw DomainError("GradedTensor: degree cap mismatch");
    }
}

GradedTensor& GradedTensor::operator+=(const GradedTensor& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
}

GradedTensor& GradedTensor::operator-=(const GradedTensor& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
}

GradedTensor& GradedTensor::operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
}

GradedTensor GradedTensor::retruncate(int m) const {
    GradedTensor t(d(), m);
    for (std::size_t i = 0; i < c_.size(); ++i) {
        const long j = t.basis().index(basis_->word(i));
        if (j >= 0) t.c_[j] = c_[i];
    }
    return t;
}

GradedTensor operator+(GradedTensor a, const GradedTensor& b) { return a += b; }
GradedTensor operator-(GradedTensor a, const GradedTensor& b) { return a -= b; }
GradedTensor operator*(double s, GradedTensor a) { return a *= s; }

GradedTensor tensor_mul(const GradedTensor& a, const GradedTensor& b) {
    if (a.basis_ptr() != b.basis_ptr()) {
        if (a.d() != b.d()) throw DomainError("tensor_mul: alphabet mismatch");
        throw DomainError("tensor_mul: degree cap mismatch");
    }
    GradedTensor out(a.basis_ptr());
    const auto& ac = a.coeffs();
    const auto& bc = b.coeffs();
    auto& oc = out.coeffs();
    for (const auto& p : a.basis().products()) {
        const double x = ac[p.a];
        if (x != 0.0) oc[p.c] += x * bc[p.b];
    }
    return out;
}

GradedTensor lie_bracket(const GradedTensor& a, const GradedTensor& b) {
    return tensor_mul(a, b) - tensor_mul(b, a);
}

GradedTensor exp_trunc(const GradedTensor& a) {
    const double a0 = a.scalar_part();
    GradedTensor x = a;
    x.coeffs()[0] = 0.0;
    // x is nilpotent of order m+1 in the truncated algebra.
    GradedTensor sum = GradedTensor::scalar(a.d(), a.m(), 1.0);
    GradedTensor term = sum;
    for (int k = 1; k <= a.m(); ++k) {
        term = tensor_mul(term, x);
        term *= 1.0 / k;
        sum += term;
    }
    if (a0 != 0.0) sum *= std::exp(a0);
    return sum;
}

GradedTensor log_trunc(const GradedTensor& a) {
    const double a0 = a.scalar_part();
    if (!(a0 > 0.0)) throw DomainError("log_trunc: scalar part must be positive");
    GradedTensor x = a;
    x *= 1.0 / a0;
    x.coeffs()[0] = 0.0;
    GradedTensor sum(a.basis_ptr());
    GradedTensor term = GradedTensor::scalar(a.d(), a.m(), 1.0);
    for (int k = 1; k <= a.m(); ++k) {
        term = tensor_mul(term, x);
        GradedTensor t = term;
        t *= ((k % 2) ? 1.0 : -1.0) / k;
        sum += t;
    }
    sum.coeffs()[0] = std::log(a0);
    return sum;
}

GradedTensor scale_tensor(const GradedTensor& a, double T) {
    GradedTensor out = a;
    const double rt = std::sqrt(T);
    for (std::size_t i = 0; i < out.coeffs().size(); ++i)
        out.coeffs()[i] *= std::pow(rt, a.basis().grade(i));
    return out;
}

GradedTensor path_signature(const PathIncrements& path, int m) {
    if (path.empty()) throw DomainError("path_signature: empty path");
    const int d = static_cast<int>(path.front().size()) - 1;
    GradedTensor sig = GradedTensor::scalar(d, m, 1.0);
    for (const auto& v : path) {
        if (v.size() != d + 1) throw DomainError("path_signature: ragged increments");
        GradedTensor seg(d, m);
        for (int i = 0; i <= d; ++i) {
            if (i == 0 && m < 2) continue;
            seg.set(Word{static_cast<std::uint8_t>(i)}, v(i));
        }
        sig = tensor_mul(sig, exp_trunc(seg));
    }
    return sig;
}

GradedTensor expected_brownian_signature(int d, int m, double T) {
    if (m < 1) throw DomainError("expected_brownian_signature: m must be >= 1");
    GradedTensor gen(d, m);
    if (m >= 2) {
        gen.set(Word{0}, T);
        for (int i = 1; i <= d; ++i)
            gen.set(Word{static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(i)}, 0.5 * T);
    }
    return exp_trunc(gen);
}

// -- Lyndon basis ----------------------------------------------------------

bool is_lyndon(const Word& w) {
    if (w.empty()) return false;
    for (std::size_t k = 1; k < w.size(); ++k) {
        Word suf(w.begin() + k, w.end());
        if (!(w < suf)) return false;
    }
    return true;
}

std::vector<Word> lyndon_words(int d, int m) {
    // Duval's generator up to length m, then filtered by grade.
    std::vector<Word> out;
    const int k = d + 1;
    std::vector<int> w{-1};
    while (!w.empty()) {
        ++w.back();
        if (static_cast<int>(w.size()) <= m) {
            Word lw(w.begin(), w.end());
            if (word_grade(lw) <= m) out.push_back(lw);
        }
        const std::size_t n = w.size();
        while (static_cast<int>(w.size()) < m) w.push_back(w[w.size() - n]);
        while (!w.empty() && w.back() == k - 1) w.pop_back();
    }
    std::sort(out.begin(), out.end(), graded_less);
    return out;
}

std::pair<Word, Word> lyndon_split(const Word& w) {
    if (w.size() < 2) throw DomainError("lyndon_split: word is a single letter");
    for (std::size_t k = 1; k < w.size(); ++k) {
        Word v(w.begin() + k, w.end());
        if (is_lyndon(v)) return {Word(w.begin(), w.begin() + k), v};
    }
    throw DomainError("lyndon_split: no Lyndon suffix");
}

namespace {

struct LyndonBasis {
    std::vector<Word> words;
    std::map<Word, std::size_t> pos;
    std::vector<GradedTensor> brackets;
    Eigen::MatrixXd P;  // basis-words x lyndon-words
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

const LyndonBasis& lyndon_basis(int d, int m) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<LyndonBasis>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{d, m}];
    if (slot) return *slot;
    auto lb = std::make_unique<LyndonBasis>();
    lb->words = lyndon_words(d, m);
    for (std::size_t i = 0; i < lb->words.size(); ++i) {
        const Word& w = lb->words[i];
        lb->pos[w] = i;
        if (w.size() == 1) {
            lb->brackets.push_back(GradedTensor::letter(d, m, w[0]));
        } else {
            auto [u, v] = lyndon_split(w);
            // Both factors are Lyndon words of lower grade, so already built.
            lb->brackets.push_back(
                lie_bracket(lb->brackets[lb->pos.at(u)], lb->brackets[lb->pos.at(v)]));
        }
    }
    const auto basis = WordBasis::get(d, m);
    lb->P.resize(static_cast<Eigen::Index>(basis->size()),
                 static_cast<Eigen::Index>(lb->words.size()));
    for (std::size_t j = 0; j < lb->words.size(); ++j)
        for (std::size_t i = 0; i < basis->size(); ++i) lb->P(i, j) = lb->brackets[j].coeffs()[i];
    lb->qr.compute(lb->P);
    slot = std::move(lb);
    return *slot;
}

}  // namespace

GradedTensor lyndon_bracket(const Word& w, int d, int m) {
    const auto& lb = lyndon_basis(d, m);
    auto it = lb.pos.find(w);
    if (it == lb.pos.end())
        throw DomainError("lyndon_bracket: " + word_to_string(w) + " is not a Lyndon word of grade <= m");
    return lb.brackets[it->second];
}

void LiePolynomial::add(const Word& lyndon, double c) {
    if (!is_lyndon(lyndon)) throw DomainError("LiePolynomial: " + word_to_string(lyndon) + " is not Lyndon");
    for (auto ch : lyndon)
        if (ch > d_) throw DomainError("LiePolynomial: letter outside alphabet");
    coef_[lyndon] += c;
}

double LiePolynomial::coeff(const Word& lyndon) const {
    auto it = coef_.find(lyndon);
    return it == coef_.end() ? 0.0 : it->second;
}

GradedTensor LiePolynomial::to_tensor(int m) const {
    GradedTensor t(d_, m);
    const auto& lb = lyndon_basis(d_, m);
    for (const auto& [w, c] : coef_) {
        if (word_grade(w) > m || c == 0.0) continue;
        GradedTensor b = lb.brackets[lb.pos.at(w)];
        b *= c;
        t += b;
    }
    return t;
}

LiePolynomial LiePolynomial::from_tensor(const GradedTensor& t, double tol) {
    const auto& lb = lyndon_basis(t.d(), t.m());
    const Eigen::Map<const Eigen::VectorXd> v(t.coeffs().data(), static_cast<Eigen::Index>(t.coeffs().size()));
    const Eigen::VectorXd c = lb.qr.solve(v);
    const double res = (lb.P * c - v).cwiseAbs().maxCoeff();
    if (res > tol)
        throw DomainError("LiePolynomial::from_tensor: not a Lie element (residual " + std::to_string(res) + ")");
    LiePolynomial L(t.d());
    for (std::size_t j = 0; j < lb.words.size(); ++j)
        if (c(j) != 0.0) L.coef_[lb.words[j]] = c(j);
    return L;
}

LiePolynomial LiePolynomial::scaled(double T) const {
    LiePolynomial L(d_);
    const double rt = std::sqrt(T);
    for (const auto& [w, c] : coef_) L.coef_[w] = c * std::pow(rt, word_grade(w));
    return L;
}

double lie_membership_residual(const GradedTensor& t) {
    const auto& lb = lyndon_basis(t.d(), t.m());
    const Eigen::Map<const Eigen::VectorXd> v(t.coeffs().data(), static_cast<Eigen::Index>(t.coeffs().size()));
    const Eigen::VectorXd c = lb.qr.solve(v);
    return (lb.P * c - v).cwiseAbs().maxCoeff();
}

CubatureReport verify_lie_cubature(const std::vector<double>& weights,
                                   const std::vector<LiePolynomial>& lie_polys, int d, int m,
                                   double T, double tol) {
    if (weights.size() != lie_polys.size()) throw DomainError("verify_cubature: weight/polynomial count mismatch");
    GradedTensor acc(d, m);
    for (std::size_t j = 0; j < weights.size(); ++j) {
        GradedTensor e = exp_trunc(lie_polys[j].scaled(T).to_tensor(m));
        e *= weights[j];
        acc += e;
    }
    const GradedTensor ref = expected_brownian_signature(d, m, T);
    CubatureReport rep;
    rep.degree = m;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < acc.coeffs().size(); ++i) {
        const double dev = std::abs(acc.coeffs()[i] - ref.coeffs()[i]);
        if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            worst = i;
        }
    }
    rep.argmax = acc.basis().word(worst);
    rep.pass = rep.max_deviation <= tol;
    return rep;
}

}  // namespace ppf
