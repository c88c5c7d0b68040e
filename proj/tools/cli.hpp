#pragma once

#include <json.hpp>

#include "biascorrect/mfcm.hpp"

namespace biascorrect::cli {

enum ExitCode : int { kOk = 0, kIo = 1, kValidation = 2, kNotConverged = 3 };

/// Solver parameters from a params file. Accepts exactly the tuning fields
/// (clusters, fuzziness, alpha, neighborhood, epsilon) plus smoothing_sigma,
/// max_iters and seed; anything else is a ValidationError.
FcmParams params_from_json(const nlohmann::json& j);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv);

}  // namespace biascorrect::cli
