#pragma once

#include <spdlog/spdlog.h>

namespace gnnformer {

/// Applies PTFORMER_LOG (quiet | info | debug) to the default logger.
/// Unset means info; an unknown value is treated as info.
void configure_logging_from_env();

}  // namespace gnnformer
