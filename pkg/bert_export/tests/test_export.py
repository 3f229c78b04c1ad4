"""Export round-trip: the EMB1 file must validate against the training
pipeline's loader with zero errors and matching token counts."""

import json

import numpy as np
import pytest

from bert_export.cli import main, parse_geometry
from bert_export.exporter import ExportConfig, export

from conftest import CORPUS, COUNTS


@pytest.fixture(scope="module")
def geometry():
    return tuple(json.loads(COUNTS.read_text())["geometry"])


def _config(tiny_encoder_dir, tmp_path, geometry, **kwargs):
    return ExportConfig(
        corpus_path=str(CORPUS),
        output_path=str(tmp_path / "out.emb1"),
        geometry=geometry,
        model_id=str(tiny_encoder_dir),
        **kwargs,
    )


class TestExportRoundTrip:
    def test_loads_in_primary_with_zero_errors(self, tiny_encoder_dir, tmp_path,
                                               geometry):
        # The acceptance round trip: exported file -> training-pipeline loader.
        hierdoc = pytest.importorskip(
            "hierdoc", reason="round-trip check needs the training pipeline"
        )
        result = export(_config(tiny_encoder_dir, tmp_path, geometry))
        assert result.records == 10
        assert result.skipped == []
        assert result.dim == 768

        docs = hierdoc.load_jsonl(CORPUS)
        table = hierdoc.load_precomputed(
            result.output_path, docs, geometry, expected_dim=768
        )
        assert set(table) == {doc.id for doc in docs}

        counts = json.loads(COUNTS.read_text())["counts"]
        for doc in docs:
            matrix = table[doc.id]
            assert matrix.values.shape == (geometry[0] * geometry[1], 768)
            assert int(matrix.pad_mask.sum()) == counts[doc.id]
            # pad-after semantics: every pad slot is exactly zero
            assert np.all(matrix.values[~matrix.pad_mask] == 0.0)
        print("ACCEPTANCE PASS: export round-trip (10 docs, dim 768, "
              "zero validation errors)")

    def test_empty_document_has_zero_tokens(self, tiny_encoder_dir, tmp_path,
                                            geometry):
        result = export(_config(tiny_encoder_dir, tmp_path, geometry))
        hierdoc_embedding = pytest.importorskip("hierdoc.embedding")
        dim, records = hierdoc_embedding.read_embeddings(result.output_path)
        by_id = {doc_id: matrix for doc_id, matrix in records}
        assert by_id["n09"].shape == (0, 768)
        assert by_id["n01"].shape[0] > 0

    def test_manifest_records_provenance(self, tiny_encoder_dir, tmp_path, geometry):
        result = export(_config(tiny_encoder_dir, tmp_path, geometry))
        manifest = json.loads(open(result.manifest_path, encoding="utf-8").read())
        assert manifest["model_id"] == str(tiny_encoder_dir)
        assert manifest["context_mode"] == "per_sentence"
        assert manifest["alignment"] == "first_subword"
        assert manifest["geometry"] == list(geometry)
        assert manifest["dim"] == 768
        assert manifest["records"] == 10
        assert manifest["skipped"] == []

    def test_per_document_context_mode(self, tiny_encoder_dir, tmp_path, geometry):
        result = export(
            _config(tiny_encoder_dir, tmp_path, geometry,
                    context_mode="per_document")
        )
        assert result.records == 10
        assert result.skipped == []
        manifest = json.loads(open(result.manifest_path, encoding="utf-8").read())
        assert manifest["context_mode"] == "per_document"

    def test_deterministic_output(self, tiny_encoder_dir, tmp_path, geometry):
        config_a = _config(tiny_encoder_dir, tmp_path / "a", geometry)
        config_b = _config(tiny_encoder_dir, tmp_path / "b", geometry)
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        export(config_a)
        export(config_b)
        assert (open(config_a.output_path, "rb").read()
                == open(config_b.output_path, "rb").read())

    def test_single_character_document(self, tiny_encoder_dir, tmp_path):
        corpus = tmp_path / "one.jsonl"
        corpus.write_text('{"id":"c1","text":"好"}\n', encoding="utf-8")
        out = tmp_path / "one.emb1"
        result = export(ExportConfig(
            corpus_path=str(corpus), output_path=str(out),
            geometry=(3, 4), model_id=str(tiny_encoder_dir),
        ))
        assert result.records == 1
        hierdoc_embedding = pytest.importorskip("hierdoc.embedding")
        dim, records = hierdoc_embedding.read_embeddings(out)
        assert dim == 768
        assert records[0][1].shape == (1, 768)


class TestCli:
    def test_cli_end_to_end(self, tiny_encoder_dir, tmp_path, geometry, capsys):
        out = tmp_path / "cli.emb1"
        code = main([
            "--corpus", str(CORPUS),
            "--out", str(out),
            "--model", str(tiny_encoder_dir),
            "--geometry", f"{geometry[0]}x{geometry[1]}",
        ])
        assert code == 0
        assert out.exists()
        assert out.with_suffix(".manifest.json").exists()
        assert "wrote 10 records" in capsys.readouterr().out

    def test_geometry_parser(self):
        assert parse_geometry("30x20") == (30, 20)
        assert parse_geometry("DE_150") == (15, 10)

    def test_missing_corpus_errors(self, tiny_encoder_dir, tmp_path, capsys):
        code = main([
            "--corpus", str(tmp_path / "nope.jsonl"),
            "--out", str(tmp_path / "x.emb1"),
            "--model", str(tiny_encoder_dir),
            "--geometry", "3x4",
        ])
        assert code == 1
        assert "error" in capsys.readouterr().err
