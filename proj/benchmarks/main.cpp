#include <benchmark/benchmark.h>

// Own entry point: the distro libbenchmark_main.a carries LTO bytecode from
// another compiler release and cannot be linked.
BENCHMARK_MAIN();
