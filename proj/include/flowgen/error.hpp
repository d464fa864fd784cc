#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowgen {

enum class ErrorCode {
    MalformedInput,
    InputNotFound,
    DuplicateId,
    DegenerateGeometry,
    EmptyInput,
    NegativeFlow,
    MissingPolygon,
    UnknownFeatureColumn,
    ConflictingFeature,
    ZeroArea,
    MissingKnnContext,
    NonpositiveDistanceForLog,
    InsufficientLocations,
    ZeroPopulationCandidate,
    ZeroDistancePowerLaw,
    DegenerateData,
    DimensionMismatch,
    NumericalOverflow,
    DivergenceDetected,
    MissingFeatures,
    AllZeroFlows,
    ZeroVariance,
    ZeroRange,
    TooFewRegions,
    LeakageDetected,
    MissingData,
    ZeroBaseline,
    OverlappingGroups,
    EmptyBackground,
};

std::string_view to_string(ErrorCode code);

/// Process exit status for a failure of the given kind: 1 numerical, 2 bad input,
/// 3 leakage or provenance violation.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , m_code(code)
    {
    }

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

} // namespace flowgen
