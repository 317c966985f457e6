#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <string_view>

namespace arrdiag {

/// Arithmetic expression over named variables, as written in the system
/// config's expression table.
///
/// Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals,
/// identifiers, and calls to `lmtd(hot_in, hot_out, cold_in, cold_out)`,
/// `abs`, `sqrt`, `log`, `exp`, `min`, `max`.
class Expression {
public:
    using Lookup = std::function<double(const std::string&)>;

    /// Throws ParseError with the column of the first bad token.
    static Expression parse(std::string_view text);

    double evaluate(const Lookup& lookup) const;

    /// Identifiers referenced by the expression (function names excluded).
    const std::set<std::string>& variables() const noexcept { return variables_; }
    const std::string& text() const noexcept { return text_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::set<std::string> variables_;
    std::string text_;
};

}  // namespace arrdiag
