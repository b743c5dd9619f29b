#pragma once

#include <stdexcept>
#include <string>

namespace rhythmorph {

// Error families map one-to-one onto CLI exit codes (see tools/rhythmorph_cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class DataErrc {
    io,
    malformed_header,
    lead_count_mismatch,
    truncated_payload,
    invalid_record,
    duplicate_record_id,
    empty_input,
    shape_mismatch,
    precondition,
    no_peaks,
    insufficient_beats,
    empty_bag,
    undefined_metric,
};

class DataError : public Error {
public:
    DataError(DataErrc code, const std::string& what) : Error(what), code_(code) {}
    DataErrc code() const noexcept { return code_; }

private:
    DataErrc code_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Raised whenever a fit operation touches an evaluation record or a subject
// spans folds. Always fatal.
class LeakageError : public Error {
public:
    using Error::Error;
};

}  // namespace rhythmorph
