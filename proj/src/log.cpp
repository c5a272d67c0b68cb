#include "gamessl/log.hpp"

#include <iostream>

namespace gamessl::log {

namespace {

Sink& sink() {
  static Sink s;
  return s;
}

bool& verbose() {
  static bool v = false;
  return v;
}

void emit(Level level, const std::string& message) {
  if (sink()) {
    sink()(level, message);
    return;
  }
  if (level == Level::Info && !verbose()) return;
  std::cerr << (level == Level::Warning ? "warning: " : "") << message << '\n';
}

}  // namespace

void set_sink(Sink s) { sink() = std::move(s); }
void reset_sink() { sink() = nullptr; }
void info(const std::string& message) { emit(Level::Info, message); }
void warn(const std::string& message) { emit(Level::Warning, message); }
void set_verbose(bool on) { verbose() = on; }

}  // namespace gamessl::log
