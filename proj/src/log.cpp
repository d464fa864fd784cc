#include "flowgen/log.hpp"
#include "flowgen/error.hpp"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace flowgen {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::InputNotFound: return "InputNotFound";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NegativeFlow: return "NegativeFlow";
    case ErrorCode::MissingPolygon: return "MissingPolygon";
    case ErrorCode::UnknownFeatureColumn: return "UnknownFeatureColumn";
    case ErrorCode::ConflictingFeature: return "ConflictingFeature";
    case ErrorCode::ZeroArea: return "ZeroArea";
    case ErrorCode::MissingKnnContext: return "MissingKnnContext";
    case ErrorCode::NonpositiveDistanceForLog: return "NonpositiveDistanceForLog";
    case ErrorCode::InsufficientLocations: return "InsufficientLocations";
    case ErrorCode::ZeroPopulationCandidate: return "ZeroPopulationCandidate";
    case ErrorCode::ZeroDistancePowerLaw: return "ZeroDistancePowerLaw";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NumericalOverflow: return "NumericalOverflow";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::MissingFeatures: return "MissingFeatures";
    case ErrorCode::AllZeroFlows: return "AllZeroFlows";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::TooFewRegions: return "TooFewRegions";
    case ErrorCode::LeakageDetected: return "LeakageDetected";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::OverlappingGroups: return "OverlappingGroups";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    }
    return "Unknown";
}

int exit_code(ErrorCode code)
{
    switch (code) {
    case ErrorCode::NumericalOverflow:
    case ErrorCode::DivergenceDetected:
    case ErrorCode::DegenerateData:
        return 1;
    case ErrorCode::LeakageDetected:
    case ErrorCode::OverlappingGroups:
        return 3;
    default:
        return 2;
    }
}

namespace log {

Level threshold()
{
    static const Level level = [] {
        const char* env = std::getenv("FLOWGEN_LOG");
        if (!env) {
            return Level::warn;
        }
        std::string_view v(env);
        if (v == "error") return Level::error;
        if (v == "info") return Level::info;
        if (v == "debug") return Level::debug;
        return Level::warn;
    }();
    return level;
}

void write(Level level, const std::string& message)
{
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[flowgen " << names[static_cast<int>(level)] << "] " << message << '\n';
}

} // namespace log
} // namespace flowgen
