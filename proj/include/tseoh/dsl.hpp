#ifndef TSEOH_DSL_HPP
#define TSEOH_DSL_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tseoh::dsl {

// Fixed variable vocabulary. Scores may depend on nothing else.
// Task features, then candidate-server features, then globals.
inline constexpr std::array<std::string_view, 18> kVocabulary = {
    "cpu", "io", "bw", "mem", "arrival", "exec", "wait",
    "free_cpu", "free_io", "free_bw", "free_mem",
    "cap_cpu", "cap_io", "cap_bw", "cap_mem",
    "now", "pending", "m_servers",
};

using VarTable = std::array<double, kVocabulary.size()>;

inline int variable_index(std::string_view name) {
    for (std::size_t i = 0; i < kVocabulary.size(); ++i)
        if (kVocabulary[i] == name) return static_cast<int>(i);
    return -1;
}

enum class Op {
    Lit, Var, Neg,
    Add, Sub, Mul, Div,
    Min, Max, Pow,
    Abs, Log, Exp, Sqrt,
    If,
};

enum class Cmp { Lt, Le, Gt, Ge, Eq };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression tree node. If-nodes carry the comparator and
/// four children: lhs, rhs, then-branch, else-branch.
struct Expr {
    Op op = Op::Lit;
    double lit = 0.0;
    int var = -1;
    Cmp cmp = Cmp::Lt;
    std::vector<ExprPtr> kids;
};

inline ExprPtr make_lit(double v) {
    auto e = std::make_shared<Expr>();
    e->op = Op::Lit;
    e->lit = v;
    return e;
}

inline ExprPtr make_var(int index) {
    auto e = std::make_shared<Expr>();
    e->op = Op::Var;
    e->var = index;
    return e;
}

inline ExprPtr make_node(Op op, std::vector<ExprPtr> kids, Cmp cmp = Cmp::Lt) {
    auto e = std::make_shared<Expr>();
    e->op = op;
    e->cmp = cmp;
    e->kids = std::move(kids);
    return e;
}

inline std::size_t node_count(const Expr& e) {
    std::size_t n = 1;
    for (const auto& k : e.kids) n += node_count(*k);
    return n;
}

inline std::size_t tree_depth(const Expr& e) {
    std::size_t d = 0;
    for (const auto& k : e.kids) d = std::max(d, tree_depth(*k));
    return d + 1;
}

inline constexpr std::size_t kMaxDepth = 64;
inline constexpr std::size_t kMaxNodes = 4096;

// --- protected arithmetic ---
//
// Every operator result is passed through protect(): non-finite values
// become 0 and magnitudes are clamped to kValueClamp. Division with a
// near-zero denominator, log of non-positive and sqrt of negative inputs
// are defined as 0. These semantics are part of the language contract
// (docs/dsl.md) and must be mirrored exactly by any second evaluator.

inline constexpr double kDivEpsilon = 1e-9;
inline constexpr double kValueClamp = 1e12;

inline double protect(double v) {
    if (!std::isfinite(v)) return 0.0;
    if (v > kValueClamp) return kValueClamp;
    if (v < -kValueClamp) return -kValueClamp;
    return v;
}

inline bool compare(Cmp c, double a, double b) {
    switch (c) {
        case Cmp::Lt: return a < b;
        case Cmp::Le: return a <= b;
        case Cmp::Gt: return a > b;
        case Cmp::Ge: return a >= b;
        case Cmp::Eq: return a == b;
    }
    return false;
}

/// Protected tree-walking evaluation. Total: finite output for any valid
/// expression and finite variable bindings. Only the selected if-branch
/// is evaluated.
inline double evaluate(const Expr& e, const VarTable& vars) {
    switch (e.op) {
        case Op::Lit: return protect(e.lit);
        case Op::Var: return protect(vars[static_cast<std::size_t>(e.var)]);
        case Op::Neg: return protect(-evaluate(*e.kids[0], vars));
        case Op::Add: return protect(evaluate(*e.kids[0], vars) + evaluate(*e.kids[1], vars));
        case Op::Sub: return protect(evaluate(*e.kids[0], vars) - evaluate(*e.kids[1], vars));
        case Op::Mul: return protect(evaluate(*e.kids[0], vars) * evaluate(*e.kids[1], vars));
        case Op::Div: {
            double num = evaluate(*e.kids[0], vars);
            double den = evaluate(*e.kids[1], vars);
            if (std::fabs(den) < kDivEpsilon) return 0.0;
            return protect(num / den);
        }
        case Op::Min: return protect(std::min(evaluate(*e.kids[0], vars), evaluate(*e.kids[1], vars)));
        case Op::Max: return protect(std::max(evaluate(*e.kids[0], vars), evaluate(*e.kids[1], vars)));
        case Op::Pow: return protect(std::pow(evaluate(*e.kids[0], vars), evaluate(*e.kids[1], vars)));
        case Op::Abs: return protect(std::fabs(evaluate(*e.kids[0], vars)));
        case Op::Log: {
            double x = evaluate(*e.kids[0], vars);
            if (x <= 0.0) return 0.0;
            return protect(std::log(x));
        }
        case Op::Exp: return protect(std::exp(evaluate(*e.kids[0], vars)));
        case Op::Sqrt: {
            double x = evaluate(*e.kids[0], vars);
            if (x < 0.0) return 0.0;
            return protect(std::sqrt(x));
        }
        case Op::If: {
            double a = evaluate(*e.kids[0], vars);
            double b = evaluate(*e.kids[1], vars);
            return compare(e.cmp, a, b) ? evaluate(*e.kids[2], vars)
                                        : evaluate(*e.kids[3], vars);
        }
    }
    return 0.0;
}

// --- parsing ---

struct ParseError {
    std::size_t pos = 0;
    std::string message;
};

struct ParseOutcome {
    ExprPtr expr;
    std::optional<ParseError> error;
    bool ok() const { return expr != nullptr; }
};

namespace detail {

struct Parser {
    std::string_view src;
    std::size_t pos = 0;
    std::optional<ParseError> error;

    void fail(std::size_t at, std::string msg) {
        if (!error) error = ParseError{at, std::move(msg)};
    }

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) { ++pos; return true; }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }

    ExprPtr parse_expr(int depth) {
        if (depth > 256) { fail(pos, "expression nesting too deep"); return nullptr; }
        ExprPtr lhs = parse_term(depth + 1);
        if (!lhs) return nullptr;
        for (;;) {
            skip_ws();
            if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) {
                char op = src[pos++];
                ExprPtr rhs = parse_term(depth + 1);
                if (!rhs) return nullptr;
                lhs = make_node(op == '+' ? Op::Add : Op::Sub, {lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    ExprPtr parse_term(int depth) {
        ExprPtr lhs = parse_unary(depth + 1);
        if (!lhs) return nullptr;
        for (;;) {
            skip_ws();
            if (pos < src.size() && (src[pos] == '*' || src[pos] == '/')) {
                char op = src[pos++];
                ExprPtr rhs = parse_unary(depth + 1);
                if (!rhs) return nullptr;
                lhs = make_node(op == '*' ? Op::Mul : Op::Div, {lhs, rhs});
            } else {
                return lhs;
            }
        }
    }

    ExprPtr parse_unary(int depth) {
        if (depth > 256) { fail(pos, "expression nesting too deep"); return nullptr; }
        skip_ws();
        if (pos < src.size() && src[pos] == '-') {
            std::size_t at = pos;
            ++pos;
            // a minus sign directly followed by a number is a negative literal,
            // so literals round-trip through render()
            skip_ws();
            if (pos < src.size() &&
                (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.')) {
                ExprPtr lit = parse_number(at);
                if (!lit) return nullptr;
                return make_lit(-lit->lit);
            }
            ExprPtr inner = parse_unary(depth + 1);
            if (!inner) return nullptr;
            return make_node(Op::Neg, {inner});
        }
        return parse_primary(depth + 1);
    }

    ExprPtr parse_number(std::size_t start) {
        skip_ws();
        std::size_t begin = pos;
        while (pos < src.size() &&
               (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.'))
            ++pos;
        if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
            std::size_t mark = pos;
            ++pos;
            if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) ++pos;
            if (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
                while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
            } else {
                pos = mark;  // bare 'e' belongs to whatever follows
            }
        }
        std::string text(src.substr(begin, pos - begin));
        try {
            std::size_t used = 0;
            double v = std::stod(text, &used);
            if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("");
            return make_lit(v);
        } catch (...) {
            fail(start, "malformed number '" + text + "'");
            return nullptr;
        }
    }

    std::string parse_ident() {
        skip_ws();
        std::size_t begin = pos;
        while (pos < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
            ++pos;
        return std::string(src.substr(begin, pos - begin));
    }

    std::optional<Cmp> parse_cmp() {
        skip_ws();
        if (pos + 1 < src.size()) {
            std::string_view two = src.substr(pos, 2);
            if (two == "<=") { pos += 2; return Cmp::Le; }
            if (two == ">=") { pos += 2; return Cmp::Ge; }
            if (two == "==") { pos += 2; return Cmp::Eq; }
        }
        if (pos < src.size()) {
            if (src[pos] == '<') { ++pos; return Cmp::Lt; }
            if (src[pos] == '>') { ++pos; return Cmp::Gt; }
        }
        fail(pos, "expected comparator (< <= > >= ==)");
        return std::nullopt;
    }

    ExprPtr parse_call(Op op, std::size_t arity, int depth, std::size_t at) {
        if (!eat('(')) { fail(pos, "expected '(' after function name"); return nullptr; }
        std::vector<ExprPtr> args;
        for (;;) {
            ExprPtr a = parse_expr(depth + 1);
            if (!a) return nullptr;
            args.push_back(a);
            if (eat(',')) continue;
            if (eat(')')) break;
            fail(pos, "expected ',' or ')' in argument list");
            return nullptr;
        }
        if (args.size() != arity) {
            fail(at, "arity mismatch: expected " + std::to_string(arity) +
                         " argument(s), got " + std::to_string(args.size()));
            return nullptr;
        }
        return make_node(op, std::move(args));
    }

    ExprPtr parse_if(int depth, std::size_t at) {
        if (!eat('(')) { fail(pos, "expected '(' after 'if'"); return nullptr; }
        ExprPtr lhs = parse_expr(depth + 1);
        if (!lhs) return nullptr;
        auto cmp = parse_cmp();
        if (!cmp) return nullptr;
        ExprPtr rhs = parse_expr(depth + 1);
        if (!rhs) return nullptr;
        if (!eat(',')) { fail(pos, "expected ',' after if-condition"); return nullptr; }
        ExprPtr then_e = parse_expr(depth + 1);
        if (!then_e) return nullptr;
        if (!eat(',')) { fail(pos, "expected ',' after if-then expression"); return nullptr; }
        ExprPtr else_e = parse_expr(depth + 1);
        if (!else_e) return nullptr;
        if (!eat(')')) { fail(pos, "expected ')' closing 'if'"); return nullptr; }
        (void)at;
        return make_node(Op::If, {lhs, rhs, then_e, else_e}, *cmp);
    }

    ExprPtr parse_primary(int depth) {
        skip_ws();
        if (pos >= src.size()) { fail(pos, "unexpected end of input"); return nullptr; }
        std::size_t at = pos;
        char c = src[pos];
        if (c == '(') {
            ++pos;
            ExprPtr inner = parse_expr(depth + 1);
            if (!inner) return nullptr;
            if (!eat(')')) { fail(pos, "expected ')'"); return nullptr; }
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number(at);
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string name = parse_ident();
            if (name == "min") return parse_call(Op::Min, 2, depth, at);
            if (name == "max") return parse_call(Op::Max, 2, depth, at);
            if (name == "pow") return parse_call(Op::Pow, 2, depth, at);
            if (name == "abs") return parse_call(Op::Abs, 1, depth, at);
            if (name == "log") return parse_call(Op::Log, 1, depth, at);
            if (name == "exp") return parse_call(Op::Exp, 1, depth, at);
            if (name == "sqrt") return parse_call(Op::Sqrt, 1, depth, at);
            if (name == "if") return parse_if(depth, at);
            int idx = variable_index(name);
            if (idx < 0) { fail(at, "unknown identifier '" + name + "'"); return nullptr; }
            return make_var(idx);
        }
        fail(at, std::string("unexpected character '") + c + "'");
        return nullptr;
    }
};

}  // namespace detail

inline ParseOutcome parse(std::string_view source) {
    detail::Parser p{source};
    ExprPtr e = p.parse_expr(0);
    if (e) {
        p.skip_ws();
        if (p.pos != source.size()) {
            p.error.reset();
            p.fail(p.pos, "trailing input after expression");
            e = nullptr;
        }
    }
    if (e) {
        if (tree_depth(*e) > kMaxDepth) {
            p.fail(0, "expression depth exceeds " + std::to_string(kMaxDepth));
            e = nullptr;
        } else if (node_count(*e) > kMaxNodes) {
            p.fail(0, "expression size exceeds " + std::to_string(kMaxNodes) + " nodes");
            e = nullptr;
        }
    }
    if (!e && !p.error) p.fail(0, "parse failed");
    return ParseOutcome{e, e ? std::nullopt : p.error};
}

// --- rendering ---

inline std::string render_literal(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string_view cmp_text(Cmp c) {
    switch (c) {
        case Cmp::Lt: return "<";
        case Cmp::Le: return "<=";
        case Cmp::Gt: return ">";
        case Cmp::Ge: return ">=";
        case Cmp::Eq: return "==";
    }
    return "<";
}

/// Fully parenthesized source form; parse(render(e)) is structurally
/// equal to e.
inline std::string render(const Expr& e) {
    switch (e.op) {
        case Op::Lit: return render_literal(e.lit);
        case Op::Var: return std::string(kVocabulary[static_cast<std::size_t>(e.var)]);
        case Op::Neg: return "(-" + render(*e.kids[0]) + ")";
        case Op::Add: return "(" + render(*e.kids[0]) + " + " + render(*e.kids[1]) + ")";
        case Op::Sub: return "(" + render(*e.kids[0]) + " - " + render(*e.kids[1]) + ")";
        case Op::Mul: return "(" + render(*e.kids[0]) + " * " + render(*e.kids[1]) + ")";
        case Op::Div: return "(" + render(*e.kids[0]) + " / " + render(*e.kids[1]) + ")";
        case Op::Min: return "min(" + render(*e.kids[0]) + ", " + render(*e.kids[1]) + ")";
        case Op::Max: return "max(" + render(*e.kids[0]) + ", " + render(*e.kids[1]) + ")";
        case Op::Pow: return "pow(" + render(*e.kids[0]) + ", " + render(*e.kids[1]) + ")";
        case Op::Abs: return "abs(" + render(*e.kids[0]) + ")";
        case Op::Log: return "log(" + render(*e.kids[0]) + ")";
        case Op::Exp: return "exp(" + render(*e.kids[0]) + ")";
        case Op::Sqrt: return "sqrt(" + render(*e.kids[0]) + ")";
        case Op::If:
            return "if(" + render(*e.kids[0]) + " " + std::string(cmp_text(e.cmp)) + " " +
                   render(*e.kids[1]) + ", " + render(*e.kids[2]) + ", " + render(*e.kids[3]) + ")";
    }
    return "0";
}

// --- structural order and canonical form ---

inline int structural_compare(const Expr& a, const Expr& b) {
    if (a.op != b.op) return static_cast<int>(a.op) < static_cast<int>(b.op) ? -1 : 1;
    switch (a.op) {
        case Op::Lit:
            if (a.lit < b.lit) return -1;
            if (a.lit > b.lit) return 1;
            return 0;
        case Op::Var:
            if (a.var != b.var) return a.var < b.var ? -1 : 1;
            return 0;
        case Op::If:
            if (a.cmp != b.cmp) return static_cast<int>(a.cmp) < static_cast<int>(b.cmp) ? -1 : 1;
            break;
        default:
            break;
    }
    if (a.kids.size() != b.kids.size()) return a.kids.size() < b.kids.size() ? -1 : 1;
    for (std::size_t i = 0; i < a.kids.size(); ++i) {
        int c = structural_compare(*a.kids[i], *b.kids[i]);
        if (c != 0) return c;
    }
    return 0;
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
    return structural_compare(a, b) == 0;
}

inline bool is_lit(const ExprPtr& e) { return e->op == Op::Lit; }

/// Canonical form: constant folding (under protected semantics) plus a
/// structural sort of the operands of commutative nodes. Idempotent.
inline ExprPtr canonicalize(const ExprPtr& e) {
    std::vector<ExprPtr> kids;
    kids.reserve(e->kids.size());
    for (const auto& k : e->kids) kids.push_back(canonicalize(k));

    if (e->op == Op::Lit) return make_lit(e->lit);
    if (e->op == Op::Var) return make_var(e->var);

    if (e->op == Op::If) {
        if (is_lit(kids[0]) && is_lit(kids[1])) {
            bool taken = compare(e->cmp, protect(kids[0]->lit), protect(kids[1]->lit));
            return taken ? kids[2] : kids[3];
        }
        return make_node(Op::If, std::move(kids), e->cmp);
    }

    bool all_lit = std::all_of(kids.begin(), kids.end(), is_lit);
    if (all_lit) {
        auto folded = make_node(e->op, std::move(kids), e->cmp);
        VarTable dummy{};
        return make_lit(evaluate(*folded, dummy));
    }

    if (e->op == Op::Add || e->op == Op::Mul || e->op == Op::Min || e->op == Op::Max) {
        if (structural_compare(*kids[1], *kids[0]) < 0) std::swap(kids[0], kids[1]);
    }
    return make_node(e->op, std::move(kids), e->cmp);
}

}  // namespace tseoh::dsl

#endif  // TSEOH_DSL_HPP
