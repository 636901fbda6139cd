#include <string>
#include <vector>

#include "faultline/cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return faultline::cli::run(args);
}
