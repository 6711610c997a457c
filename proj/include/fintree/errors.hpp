#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fintree {

// Base of every error the toolkit raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- schema ----
class SchemaError : public Error {
public:
    using Error::Error;
};

class EmptyLabel : public SchemaError {
public:
    EmptyLabel() : SchemaError("empty relation label") {}
};

class MalformedLabel : public SchemaError {
public:
    explicit MalformedLabel(const std::string& raw)
        : SchemaError("malformed relation label '" + raw + "' (expected head:tail:name or an untyped token)"), raw_(raw) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class DuplicateLabel : public SchemaError {
public:
    explicit DuplicateLabel(const std::string& raw) : SchemaError("duplicate relation label '" + raw + "'") {}
};

class NoFallbackLabel : public SchemaError {
public:
    NoFallbackLabel(const std::string& head, const std::string& tail)
        : SchemaError("no admissible label for entity pair (" + head + ", " + tail +
                      ") and the schema has no untyped fallback label") {}
};

// ---- data ----
class ParseError : public Error {
public:
    ParseError(std::size_t line_no, const std::string& what)
        : Error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class SpanError : public Error {
public:
    SpanError(const std::string& id, const std::string& what)
        : Error("instance '" + id + "': " + what), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class UnknownLabel : public Error {
public:
    UnknownLabel(const std::string& id, const std::string& raw)
        : Error("instance '" + id + "': relation '" + raw + "' is not in the label registry"), id_(id), raw_(raw) {}
    const std::string& id() const noexcept { return id_; }
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string id_;
    std::string raw_;
};

// ---- prompting / modeling ----
class QueryTooLong : public Error {
public:
    QueryTooLong(std::size_t needed, std::size_t max_len)
        : Error("query needs " + std::to_string(needed) + " tokens but max_len is " + std::to_string(max_len)) {}
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyAllowedSet : public Error {
public:
    EmptyAllowedSet() : Error("constraint mask admits no class") {}
};

// ---- training ----
class StateError : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t batch, double value)
        : Error("non-finite loss " + std::to_string(value) + " at batch " + std::to_string(batch)), batch_(batch) {}
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t batch_;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

// ---- evaluation ----
class IdMismatch : public Error {
public:
    using Error::Error;
};

class MissingGold : public Error {
public:
    explicit MissingGold(const std::string& id) : Error("instance '" + id + "' has no gold relation") {}
};

class IdOrderMismatch : public Error {
public:
    using Error::Error;
};

// ---- cli ----
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error("config field '" + field + "': " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnknownCommand : public Error {
public:
    explicit UnknownCommand(const std::string& name) : Error("unknown command '" + name + "'") {}
};

} // namespace fintree
