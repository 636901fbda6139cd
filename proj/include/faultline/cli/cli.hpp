#pragma once

#include <string>
#include <vector>

namespace faultline::cli {

/// Entry point shared by the binary and the tests. args excludes argv[0].
/// Returns 0 on success, 2 on usage errors, 1 on runtime failures.
int run(const std::vector<std::string>& args);

}  // namespace faultline::cli
