#pragma once

#include <stdexcept>
#include <string>

namespace tracer {

// Error taxonomy mirrors the CLI exit codes: config=1, data=2, backend=3.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : error {
    using error::error;
};

struct data_error : error {
    using error::error;
};

struct backend_error : error {
    using error::error;
};

// An LLM reply that does not match the required output contract.
struct reply_parse_error : backend_error {
    using backend_error::backend_error;
};

}  // namespace tracer
