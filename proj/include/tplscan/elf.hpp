#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>

#include "tplscan/features.hpp"

namespace tplscan {

struct ElfBasics {
    std::set<StringLiteral> strings;
    std::set<ExportedName> exports;
};

// Extracts string literals and exported function names from an ELF image.
//
// Strings are NUL-delimited printable runs of at least min_string_length
// characters taken from allocated, non-executable PROGBITS sections
// (.rodata, .data and friends). Exports are defined global/weak function
// symbols from the dynamic symbol table, falling back to the static one.
//
// Throws ParseError (naming the offending offset) on a malformed header and
// PartialParseError when a section lies beyond the end of the image.
ElfBasics extract_elf_basics(std::span<const std::uint8_t> bytes,
                             std::size_t min_string_length = 5);

ElfBasics extract_elf_basics_file(const std::string& path,
                                  std::size_t min_string_length = 5);

// Splits a raw byte run into printable strings the same way the section
// scanner does. Exposed for reuse by the extraction tests.
std::set<std::string> printable_runs(std::span<const std::uint8_t> bytes,
                                     std::size_t min_length);

}  // namespace tplscan
