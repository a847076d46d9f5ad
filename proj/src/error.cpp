#include "focal/error.hpp"

#include <filesystem>

namespace focal {

ExitCode exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) return ExitCode::numerical_abort;
    if (dynamic_cast<const IoError*>(&e) != nullptr) return ExitCode::io_error;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return ExitCode::io_error;
    // Everything else is a rejected input: bad config, bad data, bad parameter.
    return ExitCode::config_error;
}

}  // namespace focal
