#pragma once

#include <stdexcept>
#include <string>

namespace boxlens {

/// Bad user input: configuration values, unreadable files, unknown names.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Anything the model backend reports: load failures and inference failures.
class ModelError : public std::runtime_error {
public:
    enum class Kind {
        MissingFile,
        Unparseable,
        NoSpatialLayers,
        UnknownLayer,
        NonSpatialLayer,
        ShapeMismatch,
        Inference,
    };

    ModelError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace boxlens
