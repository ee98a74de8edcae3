// Standalone acceptance runner: one pass/fail line per criterion, nonzero
// exit on any failure. The `gfc validate` subcommand runs the same matrix.

#include <cstring>
#include <iostream>

#include "gfc/acceptance.hpp"

int main(int argc, char** argv) {
    gfc::AcceptanceOptions opt;
    opt.work_dir = "build/acceptance-out";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--configs") == 0 && i + 1 < argc) opt.configs_dir = argv[++i];
        else if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) opt.work_dir = argv[++i];
        else if (std::strcmp(argv[i], "--filter") == 0 && i + 1 < argc) opt.filter = argv[++i];
        else if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc)
            opt.threads = std::atoi(argv[++i]);
        else {
            std::cerr << "usage: gfc_acceptance [--configs DIR] [--out DIR] [--filter NAME]"
                         " [--threads N]\n";
            return 2;
        }
    }
    return gfc::run_acceptance(opt, std::cout);
}
