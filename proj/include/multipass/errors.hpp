#pragma once

#include <stdexcept>
#include <string>

namespace multipass {

/// Base class for all library errors. Carries a short machine-readable code
/// alongside the human-readable message so the CLI can emit structured errors.
class error : public std::runtime_error {
public:
    error(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct invalid_input_error : error {
    explicit invalid_input_error(const std::string& msg) : error("invalid-input", msg) {}
};

struct invalid_rotation_error : error {
    explicit invalid_rotation_error(const std::string& msg) : error("invalid-rotation", msg) {}
};

struct out_of_domain_error : error {
    explicit out_of_domain_error(const std::string& msg) : error("out-of-domain", msg) {}
};

struct singularity_error : error {
    explicit singularity_error(const std::string& msg) : error("singularity", msg) {}
};

struct unsupported_order_error : error {
    explicit unsupported_order_error(const std::string& msg) : error("unsupported-order", msg) {}
};

struct unsupported_case_error : error {
    explicit unsupported_case_error(const std::string& msg) : error("unsupported-case", msg) {}
};

struct unsupported_delta_error : error {
    explicit unsupported_delta_error(const std::string& msg) : error("unsupported-delta", msg) {}
};

struct precondition_error : error {
    explicit precondition_error(const std::string& msg) : error("precondition", msg) {}
};

struct evaluation_error : error {
    explicit evaluation_error(const std::string& msg) : error("evaluation", msg) {}
};

struct domain_exit_error : error {
    explicit domain_exit_error(const std::string& msg) : error("domain-exit", msg) {}
};

struct ill_posed_resolvent_error : error {
    explicit ill_posed_resolvent_error(const std::string& msg) : error("ill-posed-resolvent", msg) {}
};

struct resolution_exceeded_error : error {
    resolution_exceeded_error(const std::string& msg, double achieved)
        : error("resolution-exceeded", msg), achieved_bound(achieved) {}
    double achieved_bound;
};

struct invariant_violation_error : error {
    explicit invariant_violation_error(const std::string& msg) : error("invariant-violation", msg) {}
};

struct parse_error : error {
    explicit parse_error(const std::string& msg) : error("parse", msg) {}
};

} // namespace multipass
