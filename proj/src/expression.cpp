#include "arrdiag/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "arrdiag/errors.hpp"
#include "arrdiag/thermal.hpp"

namespace arrdiag {

struct Expression::Node {
    enum class Kind { number, variable, negate, add, sub, mul, div, pow, call };
    Kind kind;
    double value = 0.0;
    std::string name;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make(Kind kind, std::vector<NodePtr> args = {}, double value = 0.0, std::string name = {}) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = kind;
    n->value = value;
    n->name = std::move(name);
    n->args = std::move(args);
    return n;
}

class Parser {
public:
    Parser(std::string_view text, std::set<std::string>& vars) : text_(text), vars_(vars) {}

    NodePtr parse() {
        auto root = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("expression '" + std::string(text_) + "' column " + std::to_string(pos_ + 1) + ": " +
                         msg);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make(Kind::add, {lhs, term()});
            } else if (accept('-')) {
                lhs = make(Kind::sub, {lhs, term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = make(Kind::mul, {lhs, unary()});
            } else if (accept('/')) {
                lhs = make(Kind::div, {lhs, unary()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Kind::negate, {unary()});
        if (accept('+')) return unary();
        auto base = primary();
        if (accept('^')) return make(Kind::pow, {base, unary()});
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(text_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            if (end == rest.c_str()) fail("bad number");
            pos_ += static_cast<std::size_t>(end - rest.c_str());
            return make(Kind::number, {}, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                ++pos_;
            }
            std::string ident(text_.substr(start, pos_ - start));
            if (accept('(')) return call(std::move(ident));
            vars_.insert(ident);
            return make(Kind::variable, {}, 0.0, std::move(ident));
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr call(std::string name) {
        static const std::vector<std::pair<std::string, std::size_t>> arity = {
            {"lmtd", 4}, {"abs", 1}, {"sqrt", 1}, {"log", 1}, {"exp", 1}, {"min", 2}, {"max", 2}};
        std::size_t expected = 0;
        bool known = false;
        for (const auto& [fn, n] : arity) {
            if (fn == name) {
                expected = n;
                known = true;
            }
        }
        if (!known) fail("unknown function '" + name + "'");
        std::vector<NodePtr> args;
        if (!accept(')')) {
            do {
                args.push_back(expr());
            } while (accept(','));
            if (!accept(')')) fail("expected ')' after arguments");
        }
        if (args.size() != expected) {
            fail("function '" + name + "' takes " + std::to_string(expected) + " arguments");
        }
        return make(Kind::call, std::move(args), 0.0, std::move(name));
    }

    std::string_view text_;
    std::set<std::string>& vars_;
    std::size_t pos_ = 0;
};

double eval(const Expression::Node& n, const Expression::Lookup& lookup) {
    auto arg = [&](std::size_t i) { return eval(*n.args[i], lookup); };
    switch (n.kind) {
        case Kind::number: return n.value;
        case Kind::variable: return lookup(n.name);
        case Kind::negate: return -arg(0);
        case Kind::add: return arg(0) + arg(1);
        case Kind::sub: return arg(0) - arg(1);
        case Kind::mul: return arg(0) * arg(1);
        case Kind::div: return arg(0) / arg(1);
        case Kind::pow: return std::pow(arg(0), arg(1));
        case Kind::call:
            if (n.name == "lmtd") return thermal::lmtd(arg(0), arg(1), arg(2), arg(3));
            if (n.name == "abs") return std::abs(arg(0));
            if (n.name == "sqrt") return std::sqrt(arg(0));
            if (n.name == "log") return std::log(arg(0));
            if (n.name == "exp") return std::exp(arg(0));
            if (n.name == "min") return std::min(arg(0), arg(1));
            if (n.name == "max") return std::max(arg(0), arg(1));
            break;
    }
    throw std::logic_error("unhandled expression node");
}

}  // namespace

Expression Expression::parse(std::string_view text) {
    Expression e;
    e.text_ = std::string(text);
    Parser p(text, e.variables_);
    e.root_ = p.parse();
    return e;
}

double Expression::evaluate(const Lookup& lookup) const {
    if (!root_) throw std::logic_error("evaluate on an empty expression");
    return eval(*root_, lookup);
}

}  // namespace arrdiag
