#pragma once

#include <string>
#include <vector>

#include "chanform/common.hpp"

namespace chanform::cli {

// Parse and run one command line. Exit codes: 0 success, 1 usage error,
// 2 data/validation error, 3 numeric divergence. `args` excludes the
// program name; the argc/argv overload includes it.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

const char* error_kind_name(ErrorKind kind);

} // namespace chanform::cli
