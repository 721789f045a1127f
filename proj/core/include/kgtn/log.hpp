#pragma once

#include <functional>
#include <string_view>

namespace kgtn {

enum class LogLevel { Info, Warning, Error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink; returns the previous one. The default sink
/// writes warnings and errors to stderr and drops info messages.
LogSink set_log_sink(LogSink sink);

void log(LogLevel level, std::string_view message);

inline void log_info(std::string_view message) { log(LogLevel::Info, message); }
inline void log_warning(std::string_view message) { log(LogLevel::Warning, message); }

}  // namespace kgtn
