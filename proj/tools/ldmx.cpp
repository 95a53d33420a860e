#include <map>
#include <string>

#include <CLI11.hpp>

#include "ldmx/cli.hpp"

int main(int argc, char** argv) {
    using namespace ldmx::cli;
    CLI::App app{"Toy latent diffusion, samplers and prompt extension"};
    app.require_subcommand(1);

    struct Parsed {
        CLI::App* app;
        Command command;
        std::map<std::string, std::string> values;
        std::string config;
    };
    std::vector<std::unique_ptr<Parsed>> subs;
    for (const auto& info : commands()) {
        auto p = std::make_unique<Parsed>(Parsed{app.add_subcommand(info.name, info.help), info.command, {}, {}});
        p->app->add_option("--config", p->config, "key=value configuration file");
        for (const auto& spec : option_specs()) {
            if (!(spec.commands & bit(info.command))) continue;
            const std::string help = spec.help + (spec.default_value.empty() ? "" : " [" + spec.default_value + "]");
            if (spec.flag) {
                p->app->add_flag_callback("--" + spec.key, [&v = p->values, key = spec.key] { v[key] = "true"; }, help);
            } else {
                p->app->add_option_function<std::string>(
                    "--" + spec.key, [&v = p->values, key = spec.key](const std::string& s) { v[key] = s; }, help);
            }
        }
        subs.push_back(std::move(p));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (const auto& p : subs)
        if (p->app->parsed()) return run(p->command, p->values, p->config);
    return 2;
}
