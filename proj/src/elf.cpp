#include "tplscan/elf.hpp"

#include <elf.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "tplscan/errors.hpp"

namespace tplscan {

namespace {

std::string at_offset(std::size_t offset) {
    return " at offset " + std::to_string(offset);
}

// Returns the code-point count of a printable run, or -1 when the run
// contains control characters or is not valid UTF-8.
long printable_length(std::span<const std::uint8_t> run) {
    long count = 0;
    std::size_t i = 0;
    while (i < run.size()) {
        std::uint8_t b = run[i];
        if (b < 0x80) {
            if (b < 0x20 || b == 0x7f) {
                return -1;
            }
            ++i;
        } else {
            int extra;
            std::uint32_t cp;
            if ((b & 0xe0) == 0xc0) {
                extra = 1;
                cp = b & 0x1f;
            } else if ((b & 0xf0) == 0xe0) {
                extra = 2;
                cp = b & 0x0f;
            } else if ((b & 0xf8) == 0xf0) {
                extra = 3;
                cp = b & 0x07;
            } else {
                return -1;
            }
            if (i + extra >= run.size()) {
                return -1;
            }
            for (int k = 1; k <= extra; ++k) {
                std::uint8_t cont = run[i + k];
                if ((cont & 0xc0) != 0x80) {
                    return -1;
                }
                cp = (cp << 6) | (cont & 0x3f);
            }
            // Reject overlong encodings and surrogates.
            static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
            if (cp < kMin[extra] || cp > 0x10ffff ||
                (cp >= 0xd800 && cp <= 0xdfff)) {
                return -1;
            }
            i += 1 + extra;
        }
        ++count;
    }
    return count;
}

template <typename Ehdr, typename Shdr, typename Sym>
ElfBasics extract_impl(std::span<const std::uint8_t> bytes,
                       std::size_t min_string_length) {
    if (bytes.size() < sizeof(Ehdr)) {
        throw ParseError("truncated ELF header" + at_offset(bytes.size()));
    }
    Ehdr ehdr;
    std::memcpy(&ehdr, bytes.data(), sizeof(ehdr));

    const std::size_t shoff = ehdr.e_shoff;
    const std::size_t shnum = ehdr.e_shnum;
    const std::size_t shentsize = ehdr.e_shentsize;
    if (shentsize < sizeof(Shdr)) {
        throw ParseError("bad section header entry size" +
                         at_offset(offsetof(Ehdr, e_shentsize)));
    }
    if (shnum > 0 && (shoff > bytes.size() || shnum * shentsize > bytes.size() - shoff)) {
        throw ParseError("section header table out of bounds" + at_offset(shoff));
    }

    std::vector<Shdr> sections(shnum);
    for (std::size_t i = 0; i < shnum; ++i) {
        std::memcpy(&sections[i], bytes.data() + shoff + i * shentsize, sizeof(Shdr));
    }

    auto section_bytes = [&](const Shdr& sh) -> std::span<const std::uint8_t> {
        const std::size_t off = sh.sh_offset;
        const std::size_t size = sh.sh_size;
        if (off > bytes.size() || size > bytes.size() - off) {
            throw PartialParseError("truncated section" + at_offset(off));
        }
        return bytes.subspan(off, size);
    };

    ElfBasics out;

    // String literals: allocated, non-executable data sections.
    for (const Shdr& sh : sections) {
        if (sh.sh_type != SHT_PROGBITS) {
            continue;
        }
        if (!(sh.sh_flags & SHF_ALLOC) || (sh.sh_flags & SHF_EXECINSTR)) {
            continue;
        }
        auto data = section_bytes(sh);
        for (const std::string& run : printable_runs(data, min_string_length)) {
            out.strings.insert({run, string_weight(run)});
        }
    }

    // Exported function names: dynamic symbol table when present, else the
    // static one.
    const Shdr* symtab = nullptr;
    for (const Shdr& sh : sections) {
        if (sh.sh_type == SHT_DYNSYM) {
            symtab = &sh;
            break;
        }
    }
    if (!symtab) {
        for (const Shdr& sh : sections) {
            if (sh.sh_type == SHT_SYMTAB) {
                symtab = &sh;
                break;
            }
        }
    }
    if (symtab) {
        if (symtab->sh_link >= shnum) {
            throw ParseError("symbol table links to invalid string table" +
                             at_offset(symtab->sh_offset));
        }
        auto syms = section_bytes(*symtab);
        auto strtab = section_bytes(sections[symtab->sh_link]);
        const std::size_t count = syms.size() / sizeof(Sym);
        for (std::size_t i = 0; i < count; ++i) {
            Sym sym;
            std::memcpy(&sym, syms.data() + i * sizeof(Sym), sizeof(Sym));
            const unsigned type = sym.st_info & 0xf;
            const unsigned bind = sym.st_info >> 4;
            if (type != STT_FUNC || sym.st_shndx == SHN_UNDEF) {
                continue;
            }
            if (bind != STB_GLOBAL && bind != STB_WEAK) {
                continue;
            }
            if (sym.st_name >= strtab.size()) {
                continue;
            }
            const char* name = reinterpret_cast<const char*>(strtab.data()) + sym.st_name;
            std::size_t maxlen = strtab.size() - sym.st_name;
            std::size_t len = strnlen(name, maxlen);
            if (len > 0 && len < maxlen) {
                out.exports.insert({std::string(name, len)});
            }
        }
    }
    return out;
}

}  // namespace

std::set<std::string> printable_runs(std::span<const std::uint8_t> bytes,
                                     std::size_t min_length) {
    std::set<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= bytes.size(); ++i) {
        // NUL bytes and the section end both delimit runs.
        if (i == bytes.size() || bytes[i] == 0) {
            if (i > start) {
                auto run = bytes.subspan(start, i - start);
                long len = printable_length(run);
                if (len >= 0 && static_cast<std::size_t>(len) >= min_length) {
                    out.emplace(reinterpret_cast<const char*>(run.data()), run.size());
                }
            }
            start = i + 1;
        }
    }
    return out;
}

ElfBasics extract_elf_basics(std::span<const std::uint8_t> bytes,
                             std::size_t min_string_length) {
    if (bytes.size() < EI_NIDENT) {
        throw ParseError("truncated ELF identification" + at_offset(bytes.size()));
    }
    if (std::memcmp(bytes.data(), ELFMAG, SELFMAG) != 0) {
        throw ParseError("bad ELF magic" + at_offset(0));
    }
    if (bytes[EI_DATA] != ELFDATA2LSB) {
        throw ParseError("unsupported ELF byte order" + at_offset(EI_DATA));
    }
    switch (bytes[EI_CLASS]) {
        case ELFCLASS64:
            return extract_impl<Elf64_Ehdr, Elf64_Shdr, Elf64_Sym>(bytes, min_string_length);
        case ELFCLASS32:
            return extract_impl<Elf32_Ehdr, Elf32_Shdr, Elf32_Sym>(bytes, min_string_length);
        default:
            throw ParseError("unsupported ELF class" + at_offset(EI_CLASS));
    }
}

ElfBasics extract_elf_basics_file(const std::string& path,
                                  std::size_t min_string_length) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return extract_elf_basics(bytes, min_string_length);
}

}  // namespace tplscan
