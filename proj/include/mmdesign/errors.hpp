#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmdesign {

// Out-of-domain input to a formula (e.g. n < 4, se <= 0).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Budget or ordering constraint cannot be met. Carries the smallest budget
// that would make the problem feasible when one is known.
class ConstraintError : public std::runtime_error {
public:
    explicit ConstraintError(const std::string& what,
                             std::optional<double> minimal_budget = std::nullopt)
        : std::runtime_error(what), minimal_budget_(minimal_budget) {}

    std::optional<double> minimal_budget() const { return minimal_budget_; }

private:
    std::optional<double> minimal_budget_;
};

// Pilot data that cannot support estimation (too few subjects, zero spread).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed user input; `field` is a dotted path such as "groups[0].sigma2_eps".
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& message)
        : std::invalid_argument(field.empty() ? message : field + ": " + message),
          field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct BudgetStep {
    double budget = 0.0;
    double se = 0.0;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<BudgetStep> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}

    const std::vector<BudgetStep>& trace() const { return trace_; }

private:
    std::vector<BudgetStep> trace_;
};

}  // namespace mmdesign
