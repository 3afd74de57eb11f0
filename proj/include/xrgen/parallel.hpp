#pragma once

namespace xrgen {

// Kernel execution mode. Parallel kernels compute each output element
// independently, so results are bitwise identical to the serial reference.
enum class ExecMode { Serial, Parallel };

ExecMode exec_mode();            // process-wide default (Parallel unless XRGEN_SERIAL=1)
void set_exec_mode(ExecMode m);
int max_threads();

}  // namespace xrgen
