#pragma once

#include <cstdint>
#include <string>

namespace lmke {

// Landmark class identifier. -1 is the reserved "non-landmark" sentinel used
// for distractor queries and unlabeled index rows.
using LandmarkLabel = std::int64_t;

inline constexpr LandmarkLabel kNonLandmark = -1;

// One submission row: the landmark (or abstention) predicted for a query.
// A fresh prediction has confidence > 0 unless it abstains (landmark == -1,
// confidence == 0). Post-processing may later push confidences to 0 or below
// as a rank demotion; those rows are no longer "fresh" predictions.
struct Prediction {
  std::string query_id;
  LandmarkLabel landmark = kNonLandmark;
  double confidence = 0.0;

  bool is_abstention() const { return landmark == kNonLandmark; }
};

}  // namespace lmke
