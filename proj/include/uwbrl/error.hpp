#pragma once

#include <stdexcept>
#include <string>

namespace uwbrl {

// Every failure surfaced by the library carries a stable class name so the CLI
// can print a single machine-parsable line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define UWBRL_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name, what) {}      \
    };

UWBRL_DEFINE_ERROR(InvalidArgument)
UWBRL_DEFINE_ERROR(NoPathDetected)
UWBRL_DEFINE_ERROR(WindowOutOfBounds)
UWBRL_DEFINE_ERROR(DegeneratePlan)
UWBRL_DEFINE_ERROR(SingularGeometry)
UWBRL_DEFINE_ERROR(ConfigError)
UWBRL_DEFINE_ERROR(NonFiniteLoss)
UWBRL_DEFINE_ERROR(VersionMismatch)
UWBRL_DEFINE_ERROR(CorruptFile)
UWBRL_DEFINE_ERROR(EmptyInput)
UWBRL_DEFINE_ERROR(MissingGroundTruth)
UWBRL_DEFINE_ERROR(ShapeMismatch)
UWBRL_DEFINE_ERROR(IoError)
UWBRL_DEFINE_ERROR(GroundTruthAccess)

#undef UWBRL_DEFINE_ERROR

}  // namespace uwbrl
