#include "gnnformer/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string_view>

namespace gnnformer {

void configure_logging_from_env() {
    auto logger = spdlog::get("ptformer");
    if (!logger) {
        logger = spdlog::stderr_color_mt("ptformer");
        logger->set_pattern("[%l] %v");
    }
    spdlog::set_default_logger(logger);

    const char* raw = std::getenv("PTFORMER_LOG");
    const std::string_view level = raw ? raw : "info";
    if (level == "quiet")
        spdlog::set_level(spdlog::level::err);
    else if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else
        spdlog::set_level(spdlog::level::info);
}

}  // namespace gnnformer
