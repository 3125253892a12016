#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tubempc {

/// Entry point behind the binary. Exit code 0 on success, 1 on design
/// infeasibility or verification failure, 2 on usage/config errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tubempc
