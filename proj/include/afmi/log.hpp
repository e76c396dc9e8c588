// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

// stderr logging; verbosity from AFMI_LOG (error, info, debug). Default: info.
namespace afmi::log {

enum class Level { error = 0, info = 1, debug = 2 };

Level level() noexcept;
void set_level(Level level) noexcept;

void error(std::string_view message);
void warn(std::string_view message);  // shown at info and above
void info(std::string_view message);
void debug(std::string_view message);

}  // namespace afmi::log
