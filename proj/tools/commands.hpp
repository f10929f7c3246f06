#pragma once

namespace treelets::cli {

/// Runs the `treelets` command line. Exit codes: 0 success, 2 input or
/// validation error, 3 numerical failure.
int run(int argc, char** argv);

}  // namespace treelets::cli
