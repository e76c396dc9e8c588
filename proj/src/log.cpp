// SPDX-License-Identifier: Apache-2.0
#include "afmi/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdlib>
#include <memory>
#include <string>

namespace afmi::log {
namespace {

Level from_env() noexcept {
    const char* env = std::getenv("AFMI_LOG");
    if (!env) return Level::info;
    const std::string v(env);
    if (v == "error") return Level::error;
    if (v == "debug") return Level::debug;
    return Level::info;
}

spdlog::level::level_enum to_spdlog(Level lvl) noexcept {
    switch (lvl) {
        case Level::error: return spdlog::level::err;
        case Level::info: return spdlog::level::info;
        case Level::debug: return spdlog::level::debug;
    }
    return spdlog::level::info;
}

std::atomic<Level> current{from_env()};

spdlog::logger& logger() {
    static const std::shared_ptr<spdlog::logger> instance = [] {
        auto l = std::make_shared<spdlog::logger>("afmi", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[afmi %l] %v");
        l->set_level(to_spdlog(current.load()));
        return l;
    }();
    return *instance;
}

}  // namespace

Level level() noexcept { return current.load(); }

void set_level(Level lvl) noexcept {
    current.store(lvl);
    logger().set_level(to_spdlog(lvl));
}

void error(std::string_view message) { logger().error(message); }
void warn(std::string_view message) { logger().warn(message); }
void info(std::string_view message) { logger().info(message); }
void debug(std::string_view message) { logger().debug(message); }

}  // namespace afmi::log
