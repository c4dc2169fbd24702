#include <malloc.h>

#include <iostream>

#include "handover_cli/commands.hpp"

int main(int argc, char** argv) {
    // Training allocates many short-lived multi-megabyte matrices; keep them
    // on the heap instead of round-tripping through mmap.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return handover::cli::run(argc, argv, std::cout, std::cerr);
}
