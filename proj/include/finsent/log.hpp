#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace finsent::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

namespace detail {

inline Level level_from_env() {
    const char* v = std::getenv("FINSENT_LOG");
    if (v == nullptr) return Level::warn;
    std::string s(v);
    if (s == "debug") return Level::debug;
    if (s == "info") return Level::info;
    if (s == "warn") return Level::warn;
    if (s == "error") return Level::error;
    return Level::warn;
}

inline Level& threshold() {
    static Level lvl = level_from_env();
    return lvl;
}

inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}

inline void emit(Level lvl, std::string_view tag, std::string_view msg) {
    if (lvl < threshold()) return;
    std::lock_guard<std::mutex> lock(mutex());
    std::cerr << "[" << tag << "] " << msg << "\n";
}

} // namespace detail

inline void set_level(Level lvl) { detail::threshold() = lvl; }

inline void debug(std::string_view msg) { detail::emit(Level::debug, "debug", msg); }
inline void info(std::string_view msg) { detail::emit(Level::info, "info", msg); }
inline void warn(std::string_view msg) { detail::emit(Level::warn, "warn", msg); }
inline void error(std::string_view msg) { detail::emit(Level::error, "error", msg); }

} // namespace finsent::log
