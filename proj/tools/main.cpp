#include <csignal>
#include <iostream>

#include "server.hpp"
#include "vrbridge/bridge.hpp"

#ifndef VRBRIDGE_STATIC_DIR
#define VRBRIDGE_STATIC_DIR "companion"
#endif

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int cmd_serve(const vrbridge::bridge::RunConfig& cfg) {
  using namespace vrbridge;
  std::optional<bridge::FrameLoop> loop;
  std::optional<wire::Hub> hub;
  std::optional<serve::Server> server;
  try {
    loop.emplace(cfg);
    hub.emplace(loop->device().live_mailbox());
    hub->set_announcement(loop->announcement());
    loop->attach(&*hub);
    server.emplace(*hub, cfg.serveAddr, cfg.staticDir.empty() ? VRBRIDGE_STATIC_DIR : cfg.staticDir);
  } catch (const Error& e) {
    std::cerr << "vrbridge: " << e.what() << "\n";
    return 2;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server->start();
  std::cout << "serving on port " << server->port() << " (ws /ws, viewer /)" << std::endl;
  int status = 0;
  try {
    if (cfg.printConfig) std::cout << bridge::config_json(cfg).dump(2) << std::endl;
    loop->run(&g_stop);
  } catch (const Error& e) {
    std::cerr << "vrbridge: frame " << loop->frames_done() << ": " << e.what() << "\n";
    status = 1;
  }
  server->stop();
  if (loop->frames_done() > 0) {
    try {
      const auto rep = loop->report();
      loop->write_report(rep);
      std::cout << bridge::summary_line(rep) << "\n";
    } catch (const Error& e) {
      std::cerr << "vrbridge: " << e.what() << "\n";
      status = 1;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vrbridge::bridge::main_entry(args, cmd_serve);
}
