#pragma once

// JSON encodings for the core types. Field names match the dataset and
// record file formats exactly.

#include <json.hpp>

#include "diffadapt/core.hpp"

namespace nlohmann {

#define DIFFADAPT_DECLARE_SERIALIZER(Type)           \
  template <>                                        \
  struct adl_serializer<Type> {                      \
    static Type from_json(const json& j);            \
    static void to_json(json& j, const Type& value); \
  };

DIFFADAPT_DECLARE_SERIALIZER(diffadapt::Problem)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::Alternative)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::TokenStep)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::GenerationRecord)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::Thresholds)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::StrategyConfig)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::FeatureVector)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::ProbeParameters)
DIFFADAPT_DECLARE_SERIALIZER(diffadapt::StrategyOutcome)

#undef DIFFADAPT_DECLARE_SERIALIZER

template <>
struct adl_serializer<diffadapt::Difficulty> {
  static diffadapt::Difficulty from_json(const json& j);
  static void to_json(json& j, diffadapt::Difficulty d);
};

}  // namespace nlohmann
