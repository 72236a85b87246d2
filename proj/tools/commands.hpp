#pragma once

#include <CLI11.hpp>

namespace echo2mri::cli {

void add_phantom(CLI::App& app);
void add_prepare(CLI::App& app);
void add_train(CLI::App& app);
void add_translate(CLI::App& app);
void add_evaluate(CLI::App& app);
void add_study_commands(CLI::App& app);

}  // namespace echo2mri::cli
