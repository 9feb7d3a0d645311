#include <iostream>

#include "cdvft/cli.hpp"

int main(int argc, char** argv) { return cdvft::cli_dispatch(argc, argv, std::cout, std::cerr); }
