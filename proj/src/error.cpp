// Copyright 2026 The placekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "place/error.hpp"

namespace place {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingClass: return "MissingClass";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kNonContiguousIndices: return "NonContiguousIndices";
    case ErrorCode::kLatentLargerThanSource: return "LatentLargerThanSource";
    case ErrorCode::kUnmappedPresentClass: return "UnmappedPresentClass";
    case ErrorCode::kWordNotInVocabulary: return "WordNotInVocabulary";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kAllMaskedRow: return "AllMaskedRow";
    case ErrorCode::kAlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kAlphaNotForcedToZero: return "AlphaNotForcedToZero";
    case ErrorCode::kNegativeComponent: return "NegativeComponent";
    case ErrorCode::kTimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::kMissingResolutionLcm: return "MissingResolutionLcm";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kStepsExceedSchedule: return "StepsExceedSchedule";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kMalformedConfig: return "MalformedConfig";
    case ErrorCode::kConflictingToggles: return "ConflictingToggles";
  }
  return "Unknown";
}

}  // namespace place
