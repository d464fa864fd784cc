#pragma once

#include <sstream>
#include <string>

namespace flowgen::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity is read once from FLOWGEN_LOG (error|warn|info|debug), default warn.
Level threshold();
void write(Level level, const std::string& message);

template <typename... Args>
void emit(Level level, const Args&... args)
{
    if (level > threshold()) {
        return;
    }
    std::ostringstream os;
    (os << ... << args);
    write(level, os.str());
}

template <typename... Args> void info(const Args&... args) { emit(Level::info, args...); }
template <typename... Args> void warn(const Args&... args) { emit(Level::warn, args...); }
template <typename... Args> void debug(const Args&... args) { emit(Level::debug, args...); }

} // namespace flowgen::log
