#include "cfgain/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <tuple>

namespace cfgain::expr {

namespace {

double int_pow(double base, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= base;
    return r;
}

int compare_doubles(double a, double b) {
    if (a < b) return -1;
    if (a > b) return 1;
    return 0;
}

template <typename K, typename V, typename Cmp>
int compare_maps(const std::map<K, V>& a, const std::map<K, V>& b, Cmp cmp_value) {
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
        if (ia->first < ib->first) return -1;
        if (ib->first < ia->first) return 1;
        if (int c = cmp_value(ia->second, ib->second); c != 0) return c;
    }
    if (ia != a.end()) return 1;
    if (ib != b.end()) return -1;
    return 0;
}

} // namespace

// ---------------------------------------------------------------------------
// SymbolTable
// ---------------------------------------------------------------------------

Variable SymbolTable::declare(const std::string& name, VarKind kind) {
    if (find(name) != nullptr) throw Error("duplicate variable '" + name + "'");
    Variable v;
    v.name = name;
    v.kind = kind;
    v.index = count(kind);
    v.id = static_cast<int>(vars_.size());
    vars_.push_back(v);
    return v;
}

const Variable* SymbolTable::find(std::string_view name) const {
    for (const auto& v : vars_)
        if (v.name == name) return &v;
    return nullptr;
}

int SymbolTable::count(VarKind kind) const {
    int n = 0;
    for (const auto& v : vars_)
        if (v.kind == kind) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// ParamAffine
// ---------------------------------------------------------------------------

double ParamAffine::eval(std::span<const double> values) const {
    double r = constant;
    for (const auto& [id, c] : coeffs) r += c * values[static_cast<std::size_t>(id)];
    return r;
}

ParamAffine& ParamAffine::operator+=(const ParamAffine& other) {
    constant += other.constant;
    for (const auto& [id, c] : other.coeffs) {
        double& slot = coeffs[id];
        slot += c;
        if (slot == 0.0) coeffs.erase(id);
    }
    return *this;
}

ParamAffine& ParamAffine::operator*=(double s) {
    if (s == 0.0) {
        constant = 0.0;
        coeffs.clear();
        return *this;
    }
    constant *= s;
    for (auto& [id, c] : coeffs) c *= s;
    return *this;
}

ParamAffine affine_mul(const ParamAffine& a, const ParamAffine& b) {
    if (!a.coeffs.empty() && !b.coeffs.empty())
        throw NotInClass("product of two gain-dependent coefficients is not affine in the gains");
    if (a.coeffs.empty()) {
        ParamAffine r = b;
        r *= a.constant;
        return r;
    }
    ParamAffine r = a;
    r *= b.constant;
    return r;
}

int compare(const ParamAffine& a, const ParamAffine& b) {
    if (int c = compare_doubles(a.constant, b.constant); c != 0) return c;
    return compare_maps(a.coeffs, b.coeffs, compare_doubles);
}

// ---------------------------------------------------------------------------
// ParamPolynomial
// ---------------------------------------------------------------------------

ParamPolynomial ParamPolynomial::constant(Complex c) {
    ParamPolynomial p;
    p.insert({}, c);
    return p;
}

ParamPolynomial ParamPolynomial::parameter(int paramId) {
    ParamPolynomial p;
    p.insert({{paramId, 1}}, 1.0);
    return p;
}

ParamPolynomial ParamPolynomial::from_affine(const ParamAffine& a) {
    ParamPolynomial p;
    p.insert({}, a.constant);
    for (const auto& [id, c] : a.coeffs) p.insert({{id, 1}}, c);
    return p;
}

void ParamPolynomial::insert(const Monomial& m, Complex c) {
    if (std::abs(c) < 1e-300) return;
    auto it = terms_.find(m);
    if (it == terms_.end()) {
        terms_.emplace(m, c);
        return;
    }
    it->second += c;
    if (std::abs(it->second) < 1e-300) terms_.erase(it);
}

int ParamPolynomial::degree() const {
    int deg = 0;
    for (const auto& [m, c] : terms_) {
        int d = 0;
        for (const auto& [id, p] : m) d += p;
        deg = std::max(deg, d);
    }
    return deg;
}

Complex ParamPolynomial::eval(std::span<const double> values) const {
    Complex r = 0.0;
    for (const auto& [m, c] : terms_) {
        double mono = 1.0;
        for (const auto& [id, p] : m) mono *= int_pow(values[static_cast<std::size_t>(id)], p);
        r += c * mono;
    }
    return r;
}

std::optional<ParamAffine> ParamPolynomial::as_real_affine() const {
    ParamAffine a;
    for (const auto& [m, c] : terms_) {
        if (c.imag() != 0.0) return std::nullopt;
        if (m.empty()) {
            a.constant += c.real();
        } else if (m.size() == 1 && m.begin()->second == 1) {
            a.coeffs[m.begin()->first] += c.real();
        } else {
            return std::nullopt;
        }
    }
    return a;
}

ParamPolynomial& ParamPolynomial::operator+=(const ParamPolynomial& other) {
    for (const auto& [m, c] : other.terms_) insert(m, c);
    return *this;
}

ParamPolynomial& ParamPolynomial::operator*=(Complex s) {
    if (std::abs(s) < 1e-300) {
        terms_.clear();
        return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
}

ParamPolynomial operator*(const ParamPolynomial& a, const ParamPolynomial& b) {
    ParamPolynomial r;
    for (const auto& [ma, ca] : a.terms_) {
        for (const auto& [mb, cb] : b.terms_) {
            ParamPolynomial::Monomial m = ma;
            for (const auto& [id, p] : mb) m[id] += p;
            r.insert(m, ca * cb);
        }
    }
    if (r.degree() > kMaxPolyDegree)
        throw DegreeTooHigh("parameter polynomial degree exceeds " + std::to_string(kMaxPolyDegree));
    return r;
}

// ---------------------------------------------------------------------------
// TrigArgument
// ---------------------------------------------------------------------------

double TrigArgument::eval(std::span<const double> values) const {
    double r = offset.eval(values);
    for (const auto& [id, c] : coeffs) r += c.eval(values) * values[static_cast<std::size_t>(id)];
    return r;
}

void TrigArgument::prune() {
    for (auto it = coeffs.begin(); it != coeffs.end();) {
        if (it->second.is_zero())
            it = coeffs.erase(it);
        else
            ++it;
    }
}

int compare(const TrigArgument& a, const TrigArgument& b) {
    if (int c = compare_maps(a.coeffs, b.coeffs,
                             [](const ParamAffine& x, const ParamAffine& y) { return compare(x, y); });
        c != 0)
        return c;
    return compare(a.offset, b.offset);
}

namespace {

int compare(const TrigFactor& a, const TrigFactor& b) {
    if (int c = cfgain::expr::compare(a.arg, b.arg); c != 0) return c;
    if (a.kind != b.kind) return a.kind == TrigKind::Cos ? -1 : 1;
    return a.power - b.power;
}

bool factor_less(const TrigFactor& a, const TrigFactor& b) { return compare(a, b) < 0; }

// Key identifying a term up to its coefficient polynomial.
struct TermKey {
    std::map<int, int> varPowers;
    std::vector<TrigFactor> factors;

    bool operator<(const TermKey& other) const {
        if (int c = compare_maps(varPowers, other.varPowers,
                                 [](int x, int y) { return x - y; });
            c != 0)
            return c < 0;
        auto ia = factors.begin();
        auto ib = other.factors.begin();
        for (; ia != factors.end() && ib != other.factors.end(); ++ia, ++ib)
            if (int c = compare(*ia, *ib); c != 0) return c < 0;
        return factors.size() < other.factors.size();
    }
};

int total_degree(const std::map<int, int>& powers) {
    int d = 0;
    for (const auto& [id, p] : powers) d += p;
    return d;
}

} // namespace

// ---------------------------------------------------------------------------
// MixedTerm / MixedTrigExpr
// ---------------------------------------------------------------------------

double MixedTerm::eval(std::span<const double> values) const {
    Complex c = coeff.eval(values);
    double r = c.real(); // coefficients of parsed/substituted expressions are real
    for (const auto& [id, p] : varPowers) r *= int_pow(values[static_cast<std::size_t>(id)], p);
    for (const auto& f : factors) {
        const double a = f.arg.eval(values);
        const double t = f.kind == TrigKind::Cos ? std::cos(a) : std::sin(a);
        r *= int_pow(t, f.power);
    }
    return r;
}

MixedTrigExpr MixedTrigExpr::constant(double c) {
    MixedTerm t;
    t.coeff = ParamPolynomial::constant(c);
    return from_terms({std::move(t)});
}

MixedTrigExpr MixedTrigExpr::variable(const Variable& v) {
    MixedTerm t;
    if (random_position(v.kind)) {
        t.coeff = ParamPolynomial::constant(1.0);
        t.varPowers[v.id] = 1;
    } else {
        t.coeff = ParamPolynomial::parameter(v.id);
    }
    return from_terms({std::move(t)});
}

MixedTrigExpr MixedTrigExpr::trig(TrigKind kind, const TrigArgument& arg) {
    MixedTerm t;
    t.coeff = ParamPolynomial::constant(1.0);
    t.factors.push_back({kind, arg, 1});
    return from_terms({std::move(t)});
}

double MixedTrigExpr::eval(std::span<const double> values) const {
    double r = 0.0;
    for (const auto& t : terms_) r += t.eval(values);
    return r;
}

MixedTrigExpr MixedTrigExpr::from_terms(std::vector<MixedTerm> terms) {
    std::map<TermKey, ParamPolynomial> merged;
    for (auto& t : terms) {
        if (t.coeff.is_zero()) continue;

        // Fold factors with constant arguments into the coefficient and
        // drop zero powers before keying.
        TermKey key;
        for (auto it = t.varPowers.begin(); it != t.varPowers.end(); ++it)
            if (it->second > 0) key.varPowers.insert(*it);
        ParamPolynomial coeff = std::move(t.coeff);
        for (auto& f : t.factors) {
            if (f.power == 0) continue;
            f.arg.prune();
            if (!f.arg.has_random_part() && f.arg.offset.is_constant()) {
                const double a = f.arg.offset.constant;
                const double v = f.kind == TrigKind::Cos ? std::cos(a) : std::sin(a);
                coeff *= int_pow(v, f.power);
                continue;
            }
            key.factors.push_back(std::move(f));
        }
        if (coeff.is_zero()) continue;
        std::sort(key.factors.begin(), key.factors.end(), factor_less);

        // Merge adjacent factors with identical (kind, argument).
        std::vector<TrigFactor> mergedFactors;
        for (auto& f : key.factors) {
            if (!mergedFactors.empty() && compare(mergedFactors.back().arg, f.arg) == 0 &&
                mergedFactors.back().kind == f.kind) {
                mergedFactors.back().power += f.power;
            } else {
                mergedFactors.push_back(std::move(f));
            }
        }
        key.factors = std::move(mergedFactors);

        for (const auto& f : key.factors)
            if (f.power > kMaxTrigPower)
                throw DegreeTooHigh("trig factor power exceeds " + std::to_string(kMaxTrigPower));
        if (total_degree(key.varPowers) > kMaxPolyDegree)
            throw DegreeTooHigh("monomial degree exceeds " + std::to_string(kMaxPolyDegree));

        merged[std::move(key)] += coeff;
    }

    MixedTrigExpr e;
    for (auto& [key, coeff] : merged) {
        if (coeff.is_zero()) continue;
        MixedTerm t;
        t.coeff = std::move(coeff);
        t.varPowers = key.varPowers;
        t.factors = key.factors;
        e.terms_.push_back(std::move(t));
    }
    return e;
}

MixedTrigExpr& MixedTrigExpr::operator+=(const MixedTrigExpr& other) {
    std::vector<MixedTerm> all = terms_;
    all.insert(all.end(), other.terms_.begin(), other.terms_.end());
    *this = from_terms(std::move(all));
    return *this;
}

MixedTrigExpr& MixedTrigExpr::operator-=(const MixedTrigExpr& other) {
    return *this += other.scaled(-1.0);
}

MixedTrigExpr MixedTrigExpr::scaled(double s) const {
    std::vector<MixedTerm> terms = terms_;
    for (auto& t : terms) t.coeff *= s;
    return from_terms(std::move(terms));
}

MixedTrigExpr operator*(const MixedTrigExpr& a, const MixedTrigExpr& b) {
    std::vector<MixedTerm> out;
    out.reserve(a.terms_.size() * b.terms_.size());
    for (const auto& ta : a.terms_) {
        for (const auto& tb : b.terms_) {
            MixedTerm t;
            t.coeff = ta.coeff * tb.coeff;
            t.varPowers = ta.varPowers;
            for (const auto& [id, p] : tb.varPowers) t.varPowers[id] += p;
            t.factors = ta.factors;
            t.factors.insert(t.factors.end(), tb.factors.begin(), tb.factors.end());
            out.push_back(std::move(t));
        }
    }
    return MixedTrigExpr::from_terms(std::move(out));
}

MixedTrigExpr MixedTrigExpr::pow(int n) const {
    MixedTrigExpr r = MixedTrigExpr::constant(1.0);
    for (int i = 0; i < n; ++i) r = r * *this;
    return r;
}

// ---------------------------------------------------------------------------
// Trig-argument conversion and substitution
// ---------------------------------------------------------------------------

TrigArgument to_trig_argument(const MixedTrigExpr& e) {
    TrigArgument arg;
    for (const auto& t : e.terms()) {
        if (!t.factors.empty())
            throw NotInClass("trig argument contains a nested trigonometric factor");
        auto affine = t.coeff.as_real_affine();
        if (!affine)
            throw NotInClass("trig argument coefficient is not affine in the gains");
        if (t.varPowers.empty()) {
            arg.offset += *affine;
        } else if (t.varPowers.size() == 1 && t.varPowers.begin()->second == 1) {
            auto it = arg.coeffs.find(t.varPowers.begin()->first);
            if (it == arg.coeffs.end())
                arg.coeffs.emplace(t.varPowers.begin()->first, *affine);
            else
                it->second += *affine;
        } else {
            throw NotInClass("trig argument is not affine in the random variables");
        }
    }
    arg.prune();
    return arg;
}

namespace {

// Rewrites one trig argument after substituting `varId` by `repl`.
// The coefficient that multiplied the variable scales the whole
// replacement argument; this must stay parameter-affine.
TrigArgument substitute_in_argument(const TrigArgument& arg, int varId, const TrigArgument& repl) {
    auto it = arg.coeffs.find(varId);
    if (it == arg.coeffs.end()) return arg;
    const ParamAffine scale = it->second;
    TrigArgument out = arg;
    out.coeffs.erase(varId);
    out.offset += affine_mul(scale, repl.offset);
    for (const auto& [id, c] : repl.coeffs) {
        const ParamAffine scaled = affine_mul(scale, c);
        auto slot = out.coeffs.find(id);
        if (slot == out.coeffs.end())
            out.coeffs.emplace(id, scaled);
        else
            slot->second += scaled;
    }
    out.prune();
    return out;
}

} // namespace

MixedTrigExpr substitute(const MixedTrigExpr& e, int varId, const MixedTrigExpr& replacement) {
    std::optional<TrigArgument> replArg; // converted lazily on first trig use
    std::vector<MixedTerm> out;

    for (const auto& src : e.terms()) {
        MixedTerm base;
        base.coeff = src.coeff;
        int power = 0;
        for (const auto& [id, p] : src.varPowers) {
            if (id == varId)
                power = p;
            else
                base.varPowers[id] = p;
        }
        for (const auto& f : src.factors) {
            if (f.arg.coeffs.count(varId) != 0) {
                if (!replArg) replArg = to_trig_argument(replacement);
                base.factors.push_back({f.kind, substitute_in_argument(f.arg, varId, *replArg), f.power});
            } else {
                base.factors.push_back(f);
            }
        }
        MixedTrigExpr contribution = MixedTrigExpr::from_terms({std::move(base)});
        if (power > 0) contribution = contribution * replacement.pow(power);
        for (const auto& t : contribution.terms()) out.push_back(t);
    }
    return MixedTrigExpr::from_terms(std::move(out));
}

MixedTrigExpr bind_parameters(const MixedTrigExpr& e, std::span<const double> values) {
    std::vector<MixedTerm> bound;
    bound.reserve(e.terms().size());
    for (const auto& src : e.terms()) {
        MixedTerm t;
        t.coeff = ParamPolynomial::constant(src.coeff.eval(values));
        t.varPowers = src.varPowers;
        for (const auto& f : src.factors) {
            TrigFactor nf;
            nf.kind = f.kind;
            nf.power = f.power;
            nf.arg.offset.constant = f.arg.offset.eval(values);
            for (const auto& [id, c] : f.arg.coeffs) {
                ParamAffine numeric;
                numeric.constant = c.eval(values);
                nf.arg.coeffs.emplace(id, numeric);
            }
            nf.arg.prune();
            t.factors.push_back(std::move(nf));
        }
        bound.push_back(std::move(t));
    }
    return MixedTrigExpr::from_terms(std::move(bound));
}

// ---------------------------------------------------------------------------
// Euler expansion
// ---------------------------------------------------------------------------

Complex ExpCanonicalTerm::eval(std::span<const double> values) const {
    Complex r = poly.eval(values);
    double ph = phase.eval(values);
    for (const auto& [id, p] : varPowers) r *= int_pow(values[static_cast<std::size_t>(id)], p);
    for (const auto& [id, f] : freq) ph += f.eval(values) * values[static_cast<std::size_t>(id)];
    return r * std::polar(1.0, ph);
}

std::vector<ExpCanonicalTerm> euler_expand(const MixedTrigExpr& e) {
    std::vector<ExpCanonicalTerm> out;
    for (const auto& term : e.terms()) {
        std::vector<ExpCanonicalTerm> partial(1);
        partial[0].poly = term.coeff;
        partial[0].varPowers = term.varPowers;

        for (const auto& f : term.factors) {
            const int p = f.power;
            // cos^p(A) = (1/2)^p   sum_k C(p,k) e^{i(2k-p)A}
            // sin^p(A) = (1/2i)^p  sum_k C(p,k) (-1)^{p-k} e^{i(2k-p)A}
            Complex prefactor(1.0, 0.0);
            for (int i = 0; i < p; ++i)
                prefactor *= f.kind == TrigKind::Cos ? Complex(0.5, 0.0) : Complex(0.0, -0.5);
            std::vector<ExpCanonicalTerm> next;
            next.reserve(partial.size() * static_cast<std::size_t>(p + 1));
            double binom = 1.0;
            for (int k = 0; k <= p; ++k) {
                const int m = 2 * k - p;
                const double sign = (f.kind == TrigKind::Sin && (p - k) % 2 != 0) ? -1.0 : 1.0;
                const Complex scale = prefactor * binom * sign;
                for (const auto& src : partial) {
                    ExpCanonicalTerm t = src;
                    t.poly *= scale;
                    if (m != 0) {
                        ParamAffine off = f.arg.offset;
                        off *= static_cast<double>(m);
                        t.phase += off;
                        for (const auto& [id, c] : f.arg.coeffs) {
                            ParamAffine fc = c;
                            fc *= static_cast<double>(m);
                            auto slot = t.freq.find(id);
                            if (slot == t.freq.end())
                                t.freq.emplace(id, fc);
                            else
                                slot->second += fc;
                        }
                    }
                    next.push_back(std::move(t));
                }
                binom = binom * (p - k) / (k + 1);
            }
            partial = std::move(next);
        }
        for (auto& t : partial) out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
public:
    Parser(std::string_view text, const SymbolTable& symbols) : text_(text), symbols_(symbols) {}

    MixedTrigExpr run() {
        MixedTrigExpr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) throw SyntaxError("unexpected trailing input", pos_);
        return e;
    }

private:
    MixedTrigExpr parse_expr() {
        skip_ws();
        bool negate = false;
        if (peek() == '+' || peek() == '-') {
            negate = peek() == '-';
            ++pos_;
        }
        MixedTrigExpr e = parse_term();
        if (negate) e = e.scaled(-1.0);
        for (;;) {
            skip_ws();
            const char c = peek();
            if (c == '+' || c == '-') {
                ++pos_;
                MixedTrigExpr t = parse_term();
                e += (c == '-') ? t.scaled(-1.0) : t;
            } else {
                return e;
            }
        }
    }

    MixedTrigExpr parse_term() {
        MixedTrigExpr e = parse_factor();
        for (;;) {
            skip_ws();
            if (peek() == '*') {
                ++pos_;
                e = e * parse_factor();
            } else {
                return e;
            }
        }
    }

    MixedTrigExpr parse_factor() {
        MixedTrigExpr base = parse_base();
        skip_ws();
        if (peek() == '^') {
            ++pos_;
            skip_ws();
            const std::size_t start = pos_;
            int n = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                n = n * 10 + (text_[pos_] - '0');
                if (n > kMaxPolyDegree)
                    throw DegreeTooHigh("exponent exceeds " + std::to_string(kMaxPolyDegree));
                ++pos_;
            }
            if (pos_ == start) throw SyntaxError("expected a natural-number exponent", pos_);
            return base.pow(n);
        }
        return base;
    }

    MixedTrigExpr parse_base() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError("unexpected end of expression", pos_);
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (c == '(') {
            ++pos_;
            MixedTrigExpr e = parse_expr();
            expect(')');
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            const std::string ident = parse_ident();
            if (ident == "sin" || ident == "cos") {
                const TrigKind kind = ident == "sin" ? TrigKind::Sin : TrigKind::Cos;
                expect('(');
                MixedTrigExpr inner = parse_expr();
                expect(')');
                TrigArgument arg;
                try {
                    arg = to_trig_argument(inner);
                } catch (const NotInClass& err) {
                    throw NotInClass(std::string(err.what()) + " (argument starting at offset " +
                                     std::to_string(start) + ")");
                }
                if (arg.empty()) return MixedTrigExpr::constant(kind == TrigKind::Cos ? 1.0 : 0.0);
                return MixedTrigExpr::trig(kind, arg);
            }
            const Variable* v = symbols_.find(ident);
            if (v == nullptr) throw UnknownSymbol(ident, start);
            return MixedTrigExpr::variable(*v);
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
    }

    MixedTrigExpr parse_number() {
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || ptr == begin) throw SyntaxError("malformed number", pos_);
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        return MixedTrigExpr::constant(value);
    }

    std::string parse_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c)
            throw SyntaxError(std::string("expected '") + c + "'", pos_);
        ++pos_;
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    std::string_view text_;
    const SymbolTable& symbols_;
    std::size_t pos_ = 0;
};

} // namespace

MixedTrigExpr parse(std::string_view text, const SymbolTable& symbols) {
    return Parser(text, symbols).run();
}

// ---------------------------------------------------------------------------
// CompiledExpr
// ---------------------------------------------------------------------------

CompiledExpr::CompiledExpr(const MixedTrigExpr& e) {
    terms_.reserve(e.terms().size());
    for (const auto& src : e.terms()) {
        Term t;
        auto affine = src.coeff.as_real_affine();
        if (!affine || !affine->is_constant())
            throw Error("compiled evaluation requires parameter-free coefficients");
        t.coeff = affine->constant;
        for (const auto& [id, p] : src.varPowers) t.powers.emplace_back(id, p);
        for (const auto& f : src.factors) {
            Trig trig;
            trig.sine = f.kind == TrigKind::Sin;
            trig.power = f.power;
            if (!f.arg.offset.is_constant())
                throw Error("compiled evaluation requires parameter-free trig arguments");
            trig.offset = f.arg.offset.constant;
            for (const auto& [id, c] : f.arg.coeffs) {
                if (!c.is_constant())
                    throw Error("compiled evaluation requires parameter-free trig arguments");
                trig.coeffs.emplace_back(id, c.constant);
            }
            t.trigs.push_back(std::move(trig));
        }
        terms_.push_back(std::move(t));
    }
}

double CompiledExpr::eval(std::span<const double> values) const {
    double sum = 0.0;
    for (const auto& t : terms_) {
        double r = t.coeff;
        for (const auto& [id, p] : t.powers) r *= int_pow(values[static_cast<std::size_t>(id)], p);
        for (const auto& trig : t.trigs) {
            double a = trig.offset;
            for (const auto& [id, c] : trig.coeffs) a += c * values[static_cast<std::size_t>(id)];
            r *= int_pow(trig.sine ? std::sin(a) : std::cos(a), trig.power);
        }
        sum += r;
    }
    return sum;
}

} // namespace cfgain::expr
