#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spikedet: QCFS detector training, IF-neuron conversion and spiking simulation"};
  spikedet::cli::register_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e); // 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2; // usage error
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
