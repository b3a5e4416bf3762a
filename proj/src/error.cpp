#include "pcons/error.hpp"

namespace pcons {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_persona: return "invalid-persona";
    case ErrorCode::invalid_category: return "invalid-category";
    case ErrorCode::invalid_instrument: return "invalid-instrument";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::unparseable_answer: return "unparseable-answer";
    case ErrorCode::incomplete_survey: return "incomplete-survey";
    case ErrorCode::judge_parse: return "judge-parse";
    case ErrorCode::unknown_axis: return "unknown-axis";
    case ErrorCode::wrong_axis: return "wrong-axis";
    case ErrorCode::transport: return "transport";
    case ErrorCode::permanent: return "permanent";
    case ErrorCode::empty_cell: return "empty-cell";
    case ErrorCode::malformed_distribution: return "malformed-distribution";
    case ErrorCode::empty_aggregate: return "empty-aggregate";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::incomplete_matrix: return "incomplete-matrix";
    case ErrorCode::io: return "io";
    case ErrorCode::store_corruption: return "store-corruption";
  }
  return "unknown";
}

}  // namespace pcons
