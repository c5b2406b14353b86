#pragma once

namespace vqtt::cli {

// Full command-line front end. Returns the process exit code:
// 0 success, 1 user/configuration error, 2 internal error.
int run(int argc, const char* const* argv);

}  // namespace vqtt::cli
