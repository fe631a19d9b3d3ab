#ifndef KMC_BINARY_IO_HPP_
#define KMC_BINARY_IO_HPP_

// Little-endian primitives shared by the KMCF / KMCD / KMCS containers.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "kmc/errors.hpp"

namespace kmc::detail
{
    class LeWriter
    {
    public:
        void magic(std::string_view m) { _buf.insert(_buf.end(), m.begin(), m.end()); }

        void u16(std::uint32_t v)
        {
            if (v > 0xFFFF)
                throw FormatError("value " + std::to_string(v) + " does not fit in u16");
            put<std::uint16_t>(static_cast<std::uint16_t>(v));
        }

        void u32(std::uint32_t v) { put<std::uint32_t>(v); }
        void f32(float v) { put<std::uint32_t>(std::bit_cast<std::uint32_t>(v)); }

        const std::vector<char>& bytes() const noexcept { return _buf; }

        void save(const std::filesystem::path& path) const
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out)
                throw IoError("cannot open " + path.string() + " for writing");
            out.write(_buf.data(), static_cast<std::streamsize>(_buf.size()));
            if (!out)
                throw IoError("write failed: " + path.string());
        }

    private:
        template <typename U>
        void put(U v)
        {
            for (std::size_t i = 0; i < sizeof(U); ++i)
                _buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }

        std::vector<char> _buf;
    };

    class LeReader
    {
    public:
        LeReader(std::vector<char> bytes, std::string label)
            : _label(std::move(label)), _buf(std::move(bytes))
        {
        }

        LeReader(const std::filesystem::path& path, std::string label)
            : LeReader(readAll(path), std::move(label))
        {
        }

        static std::vector<char> readAll(const std::filesystem::path& path)
        {
            std::ifstream in(path, std::ios::binary);
            if (!in)
                throw IoError("cannot open " + path.string());
            return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        }

        void expectMagic(std::string_view m)
        {
            need(m.size());
            if (std::memcmp(_buf.data() + _pos, m.data(), m.size()) != 0)
                throw FormatError(_label + ": bad magic, expected " + std::string(m));
            _pos += m.size();
        }

        std::uint16_t u16() { return get<std::uint16_t>(); }
        std::uint32_t u32() { return get<std::uint32_t>(); }
        float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

        std::size_t position() const noexcept { return _pos; }
        std::size_t size() const noexcept { return _buf.size(); }
        std::size_t remaining() const noexcept { return _buf.size() - _pos; }

        void seek(std::size_t pos)
        {
            if (pos > _buf.size())
                throw FormatError(_label + ": truncated file");
            _pos = pos;
        }

        void need(std::size_t n) const
        {
            if (n > _buf.size() - _pos)
                throw FormatError(_label + ": truncated file");
        }

    private:
        template <typename U>
        U get()
        {
            need(sizeof(U));
            U v = 0;
            for (std::size_t i = 0; i < sizeof(U); ++i)
                v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(_buf[_pos + i])) << (8 * i));
            _pos += sizeof(U);
            return v;
        }

        std::string _label;
        std::vector<char> _buf;
        std::size_t _pos = 0;
    };
}

#endif
