#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridpulse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed case or sidecar text. `line()` is 1-based.
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class SingularBranch : public Error {
public:
    explicit SingularBranch(int branch_id)
        : Error("branch " + std::to_string(branch_id) + " has zero series reactance"),
          branch_id_(branch_id) {}
    int branch_id() const noexcept { return branch_id_; }

private:
    int branch_id_;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class BaseCaseInfeasible : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

/// A record column needed by the report is absent.
class MissingField : public Error {
public:
    MissingField(std::string field, std::vector<std::string> scenarios)
        : Error(format(field, scenarios)), field_(std::move(field)),
          scenarios_(std::move(scenarios)) {}

    const std::string& field() const noexcept { return field_; }
    const std::vector<std::string>& scenarios() const noexcept { return scenarios_; }

private:
    static std::string format(const std::string& field, const std::vector<std::string>& ids) {
        std::string msg = "missing field '" + field + "'";
        if (!ids.empty()) {
            msg += " in scenarios:";
            for (const auto& id : ids) msg += " " + id;
        }
        return msg;
    }

    std::string field_;
    std::vector<std::string> scenarios_;
};

}  // namespace gridpulse
