#include "xrgen/parallel.hpp"

#include <cstdlib>
#include <omp.h>

namespace xrgen {

namespace {
ExecMode initial_mode() {
    const char* env = std::getenv("XRGEN_SERIAL");
    if (env && env[0] == '1') return ExecMode::Serial;
    return ExecMode::Parallel;
}
ExecMode g_mode = initial_mode();
}  // namespace

ExecMode exec_mode() { return g_mode; }
void set_exec_mode(ExecMode m) { g_mode = m; }
int max_threads() { return omp_get_max_threads(); }

}  // namespace xrgen
