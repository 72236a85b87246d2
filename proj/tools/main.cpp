#include <iostream>

#include "commands.hpp"
#include "echo2mri/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"echo2mri: unpaired echo to cardiac-MRI view translation"};
  app.require_subcommand(1);
  echo2mri::cli::add_phantom(app);
  echo2mri::cli::add_prepare(app);
  echo2mri::cli::add_train(app);
  echo2mri::cli::add_translate(app);
  echo2mri::cli::add_evaluate(app);
  echo2mri::cli::add_study_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const echo2mri::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
