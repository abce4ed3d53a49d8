// timbre_service: HTTP host for the listening experiment.
//
// The admin token for GET /api/export is read from TIMBRE_ADMIN_TOKEN.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "timbre/service.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Listening-experiment service"};
    timbre::service::ServiceConfig cfg;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    app.add_option("--stimuli", cfg.stimulus_dir, "Rendered stimulus directory (manifest.json + WAVs)");
    app.add_option("--log", cfg.log_path, "Append-only event log")->required();
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port (0 picks a free one)");
    app.add_option("--static", static_dir, "Directory of UI assets served at /");
    app.add_option("--screening-pass", cfg.screening_pass, "Correct screening answers needed");
    CLI11_PARSE(app, argc, argv);

    if (const char* token = std::getenv("TIMBRE_ADMIN_TOKEN")) {
        cfg.admin_token = token;
    }
    try {
        timbre::service::ExperimentStore store(cfg);
        httplib::Server server;
        timbre::service::install_routes(server, store, static_dir);
        const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
        if (bound < 0) {
            std::cerr << "cannot bind " << host << ":" << port << "\n";
            return 1;
        }
        std::cout << "listening " << host << ":" << bound << " stimuli=" << store.stimulus_ids().size()
                  << std::endl;
        server.listen_after_bind();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
