#pragma once

#include <string>
#include <string_view>

namespace flowgen {

/// The flow generation models: gravity (G), nonlinear gravity (NG),
/// multi-feature gravity (MFG), Deep Gravity (DG) and its two variants.
enum class ModelVariant { g, ng, mfg, dg, dg_sum, dg_knn };

/// Distance decay of the gravity model: e^{b r} or r^{b}.
enum class Deterrence { exponential, power };

std::string_view to_string(ModelVariant variant);
std::string_view to_string(Deterrence deterrence);
/// Accepts g, ng, mfg, dg, dg-sum, dg-knn (case-insensitive, '_' or '-').
ModelVariant parse_variant(std::string_view text);
Deterrence parse_deterrence(std::string_view text);

inline bool is_neural(ModelVariant v) { return v != ModelVariant::g; }

} // namespace flowgen
