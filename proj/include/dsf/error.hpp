#pragma once

#include <stdexcept>
#include <string>

namespace dsf {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag that the CLI prints in its one-line error report.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define DSF_DEFINE_ERROR(Name, tag)                                            \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(tag, what) {}           \
    };

DSF_DEFINE_ERROR(DimensionError, "dimension")
DSF_DEFINE_ERROR(ArgumentError, "argument")
DSF_DEFINE_ERROR(ContractError, "contract")
DSF_DEFINE_ERROR(ConfigError, "config")
DSF_DEFINE_ERROR(GlyphMissingError, "glyph-missing")
DSF_DEFINE_ERROR(FormatError, "format")
DSF_DEFINE_ERROR(CorruptionError, "corruption")
DSF_DEFINE_ERROR(IoError, "io")
DSF_DEFINE_ERROR(TrainingError, "training")

#undef DSF_DEFINE_ERROR

/// Parse failure that carries the 1-based line number of the offending input.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace dsf
