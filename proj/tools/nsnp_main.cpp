#include <iostream>

#include "nsnp/cli.h"

int main(int argc, char** argv) {
    return nsnp::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
