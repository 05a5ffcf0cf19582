import numpy as np
import pytest

from ensembleguard.ingest import (CIC_IDS_2017, NSL_KDD, NSL_KDD_FEATURES, UNSW_NB15, ParseError,
                                  SchemaError, UnknownLabelError, class_taxonomy, concat,
                                  parse_cicids2017, parse_dataset, parse_nslkdd, parse_taxonomy,
                                  parse_unswnb15, read_dataset, write_dataset)

from _synth import synth_rows


def _nsl_line(label, proto="tcp", extra_difficulty=True):
    cells = ["0"] * 41
    cells[1], cells[2], cells[3] = proto, "http", "SF"
    cells[4] = "181"
    return ",".join(cells + [label] + (["20"] if extra_difficulty else []))


def test_nslkdd_two_rows(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text(_nsl_line("neptune") + "\n" + _nsl_line("normal") + "\n")
    ds = parse_nslkdd(p)
    assert ds.n == 2
    assert set(ds.labels) == {"DoS", "Normal"}
    assert list(ds.raw_labels) == ["neptune", "normal"]
    assert ds.schema.p == 41
    assert ds.schema.names == NSL_KDD_FEATURES


def test_nslkdd_without_difficulty_and_trailing_dot(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text(_nsl_line("smurf.", extra_difficulty=False) + "\n")
    ds = parse_nslkdd(p)
    assert ds.labels[0] == "DoS" and ds.raw_labels[0] == "smurf"


def test_nslkdd_empty_file(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("")
    with pytest.raises(ParseError, match="no records"):
        parse_nslkdd(p)


def test_nslkdd_short_row_reports_line(tmp_path):
    p = tmp_path / "a.txt"
    bad = ",".join(["0"] * 40)
    p.write_text(_nsl_line("normal") + "\n" + bad + "\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_nslkdd(p)


def test_nslkdd_non_numeric_cell(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text(_nsl_line("normal").replace(",181,", ",abc,", 1) + "\n")
    with pytest.raises(ParseError, match="src_bytes"):
        parse_nslkdd(p)


def test_unknown_label(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text(_nsl_line("martian") + "\n")
    with pytest.raises(UnknownLabelError, match="martian"):
        parse_nslkdd(p)


def test_parsing_is_deterministic(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("\n".join(",".join(r) for r in synth_rows(200, seed=1)) + "\n")
    a, b = parse_nslkdd(p), parse_nslkdd(p)
    assert a.equals(b)
    assert all(len(r.values) == 41 for r in a.records)


UNSW_HEADER = "id,dur,proto,service,state,spkts,sbytes,attack_cat,label"


def test_unsw_three_rows(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text(UNSW_HEADER + "\n"
                 "1,0.1,tcp,-,FIN,6,258,Normal,0\n"
                 "2,0.2,udp,dns,INT,2,114,Generic,1\n"
                 "3,0.3,tcp,http,FIN,10,1000,Exploits,1\n")
    ds = parse_unswnb15(p)
    assert ds.n == 3
    assert ds.schema.names == ("dur", "proto", "service", "state", "spkts", "sbytes")
    assert ds.schema.categorical == (1, 2, 3)
    assert list(ds.labels) == ["Normal", "Generic", "Exploits"]


def test_unsw_header_only(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text(UNSW_HEADER + "\n")
    with pytest.raises(ParseError, match="no records"):
        parse_unswnb15(p)


def test_unsw_missing_label_column(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text("id,dur\n1,2\n")
    with pytest.raises(SchemaError):
        parse_unswnb15(p)


CIC_HEADER = " Destination Port, Flow Duration, Flow Bytes/s, Label"


def test_cicids_concatenation_and_infinity(tmp_path):
    a, b = tmp_path / "mon.csv", tmp_path / "tue.csv"
    a.write_text(CIC_HEADER + "\n80,100,Infinity,BENIGN\n22,5,3.5,SSH-Patator\n")
    b.write_text(CIC_HEADER + "\n80,7,NaN,PortScan\n443,9,1.0,DDoS\n")
    ds = parse_cicids2017([a, b])
    assert ds.n == 4
    assert list(ds.labels) == ["Benign", "BruteForce", "PortScan", "DoS"]
    assert np.isnan(ds.columns[2][0]) and np.isnan(ds.columns[2][2])
    assert ds.n == parse_cicids2017([a]).n + parse_cicids2017([b]).n


def test_cicids_header_mismatch(tmp_path):
    a, b = tmp_path / "mon.csv", tmp_path / "tue.csv"
    a.write_text(CIC_HEADER + "\n80,100,1,BENIGN\n")
    b.write_text(" Destination Port, Flow Duration, Label\n80,7,BENIGN\n")
    with pytest.raises(SchemaError):
        parse_cicids2017([a, b])


def test_cicids_web_attack_dash_variants(tmp_path):
    a = tmp_path / "thu.csv"
    a.write_text(CIC_HEADER + "\n80,1,1,Web Attack – XSS\n80,1,1,Web Attack - XSS\n")
    assert list(parse_cicids2017([a]).labels) == ["WebAttack", "WebAttack"]


def test_class_taxonomies():
    assert class_taxonomy(NSL_KDD).class_order == ("Normal", "DoS", "Probing", "Privilege",
                                                   "AccessControl")
    cic = class_taxonomy(CIC_IDS_2017)
    assert cic.n_classes == 7 and cic.class_order[0] == "Benign"
    assert cic.display_name("DoS") == "DoS Attacks"
    unsw = class_taxonomy(UNSW_NB15)
    assert unsw.class_order[0] == "Normal"
    for cat in ("Fuzzers", "Analysis", "Backdoor", "DoS", "Exploits", "Generic",
                "Reconnaissance", "Shellcode", "Worms"):
        assert cat in unsw.class_order


def test_taxonomy_covers_nslkdd_attack_names():
    tax = class_taxonomy(NSL_KDD)
    names = ["normal", "back", "land", "neptune", "pod", "smurf", "teardrop", "apache2",
             "mailbomb", "processtable", "udpstorm", "ipsweep", "nmap", "portsweep", "satan",
             "mscan", "saint", "buffer_overflow", "loadmodule", "perl", "rootkit", "ps",
             "sqlattack", "xterm", "ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy",
             "warezclient", "warezmaster", "named", "sendmail", "snmpgetattack", "snmpguess",
             "worm", "xlock", "xsnoop", "httptunnel"]
    out = tax.classify(names)
    assert out[0] == "Normal" and set(out[1:]) <= {"DoS", "Probing", "Privilege", "AccessControl"}


def test_parse_taxonomy_rejects_unknown_class():
    with pytest.raises(ValueError):
        parse_taxonomy("kind = X\n@class A | A\nfoo = B\n")


def test_parse_dataset_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.txt"):
        parse_dataset(NSL_KDD, [tmp_path / "nope.txt"])


def test_write_read_round_trip(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("\n".join(",".join(r) for r in synth_rows(50, seed=2)) + "\n")
    ds = parse_nslkdd(p)
    write_dataset(ds, tmp_path / "d.csv")
    assert read_dataset(tmp_path / "d.csv").equals(ds)
    both = concat([ds, ds])
    assert both.n == 2 * ds.n
