#pragma once

#include <stdexcept>
#include <string>

namespace sbn {

/// Base exception. Every failure carries a stable kind tag plus a message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define SBN_DEFINE_ERROR(Name)                                        \
    struct Name : Error {                                             \
        explicit Name(const std::string& msg) : Error(#Name, msg) {}  \
    }

// tensor core
SBN_DEFINE_ERROR(InvalidShape);
SBN_DEFINE_ERROR(ShapeMismatch);
SBN_DEFINE_ERROR(DivisionDomain);
SBN_DEFINE_ERROR(EmptyAxes);
SBN_DEFINE_ERROR(AxisOutOfRange);
SBN_DEFINE_ERROR(NonScalarLoss);
SBN_DEFINE_ERROR(AlreadyConsumed);
SBN_DEFINE_ERROR(NonDeterministicFunction);
SBN_DEFINE_ERROR(NonFiniteValue);
SBN_DEFINE_ERROR(GradientUnavailable);
SBN_DEFINE_ERROR(InvalidArgument);
SBN_DEFINE_ERROR(CorruptTensorFile);

// normalization layers
SBN_DEFINE_ERROR(ChannelMismatch);
SBN_DEFINE_ERROR(IndexOutOfRange);

// losses and attacks
SBN_DEFINE_ERROR(EmptyBatch);
SBN_DEFINE_ERROR(LabelOutOfRange);
SBN_DEFINE_ERROR(NonFiniteGradient);

// diagnostics
SBN_DEFINE_ERROR(ZeroNormVector);
SBN_DEFINE_ERROR(TooFewVectors);
SBN_DEFINE_ERROR(EmptySeries);

// supernet search
SBN_DEFINE_ERROR(MissingConditionIndex);
SBN_DEFINE_ERROR(NonFiniteAlpha);
SBN_DEFINE_ERROR(AlreadyAttached);
SBN_DEFINE_ERROR(NormNotAttached);

// data synthesis
SBN_DEFINE_ERROR(DegenerateSpec);

// experiment harness
SBN_DEFINE_ERROR(ConfigInvalid);
SBN_DEFINE_ERROR(MissingMetrics);
SBN_DEFINE_ERROR(CorruptRecord);

#undef SBN_DEFINE_ERROR

}  // namespace sbn
