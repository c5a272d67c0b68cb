#pragma once

#include <functional>
#include <string>

namespace gamessl::log {

enum class Level { Info, Warning };

// Messages go to stderr unless a sink is installed (tests capture them).
using Sink = std::function<void(Level, const std::string&)>;
void set_sink(Sink sink);
void reset_sink();

void info(const std::string& message);
void warn(const std::string& message);

// Info messages are dropped unless enabled; warnings always pass.
void set_verbose(bool on);

}  // namespace gamessl::log
