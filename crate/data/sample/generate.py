"""Regenerates the bundled sample corpus: four synthetic users, 1,000 trace
lines in total, plus a short description file for every command used."""

import pathlib
import random

HERE = pathlib.Path(__file__).parent

MAN = {
    "ls": "list directory contents; show the files and directories in a directory, with long listing of file sizes and permissions",
    "cd": "change the current working directory to another directory",
    "pwd": "print the name of the current working directory",
    "mkdir": "make new directories; create a directory with the given name",
    "rmdir": "remove empty directories; delete a directory that holds no files",
    "rm": "remove files; delete each named file, or directories with recursive removal",
    "cp": "copy files and directories; duplicate a source file to a destination file",
    "mv": "move or rename files; move a source file to a destination directory",
    "cat": "concatenate files and print file contents on the standard output",
    "more": "display file contents one screen at a time; a pager for viewing text files",
    "less": "pager for viewing text files one screen at a time, with backward movement and searching",
    "head": "output the first lines of each file to standard output",
    "tail": "output the last lines of each file to standard output",
    "vi": "screen oriented visual text editor; edit text files in a buffer",
    "emacs": "extensible text editor; edit text files and buffers with commands",
    "gcc": "compile C source files into object files and link an executable program",
    "cc": "C compiler; compile source files and link an executable program",
    "make": "maintain program groups; build targets by running compile commands from a makefile",
    "grep": "search files for lines matching a pattern and print matching lines",
    "find": "search a directory hierarchy for files matching an expression",
    "wc": "count lines, words and characters in each file",
    "sort": "sort lines of text files and write the sorted output",
    "diff": "compare files line by line and print the differences",
    "lpr": "print files on the line printer; send files to the printer queue",
    "lpq": "show the printer queue and the status of print jobs",
    "man": "display the online manual page describing a command",
    "mail": "send and receive electronic mail messages",
    "who": "show which users are logged in to the system",
    "finger": "show information about users logged in to the system",
    "ps": "report a snapshot of the current processes and their status",
    "kill": "send a signal to a process; terminate processes by process number",
    "jobs": "list the background jobs of the current shell and their status",
    "fg": "bring a background job to the foreground of the shell",
    "chmod": "change file permission bits and access modes of files",
    "tar": "archive utility; create and extract archive files of directories",
    "latex": "typeset a document; produce formatted output from latex source text",
    "xdvi": "preview typeset dvi output on the display screen",
    "date": "print or set the system date and time",
    "echo": "display a line of text on the standard output",
    "logout": "terminate the login session and leave the shell",
}

FLOWS = {
    "edit": [("{ed} {src}", 1.0), ("make", 0.8), ("{cc} -o prog {src}", 0.3), ("prog", 0.6)],
    "browse": [("cd {dir}", 0.9), ("ls", 0.5), ("ls -l", 0.5), ("{pager} {txt}", 0.8)],
    "tidy": [("ls -l", 1.0), ("mkdir {dir}", 0.3), ("cp {txt} {dir}", 0.5), ("mv {txt} {dir}", 0.4), ("rm {txt}", 0.5)],
    "doc": [("{ed} paper.tex", 1.0), ("latex paper.tex", 1.0), ("xdvi paper.dvi", 0.7), ("lpr -Plw paper.dvi", 0.4), ("lpq", 0.3)],
    "search": [("grep -i {word} {txt}", 0.8), ("find . -name {src}", 0.4), ("wc -l {txt}", 0.4), ("sort {txt}", 0.3)],
    "social": [("who", 0.7), ("finger {user}", 0.4), ("mail", 0.8), ("date", 0.3)],
    "procs": [("ps -ef", 1.0), ("kill -9 1234", 0.5), ("jobs", 0.4), ("fg", 0.4)],
}

USERS = {
    "alice": dict(ed="vi", cc="gcc", pager="more", flows={"edit": 5, "browse": 3, "search": 2, "social": 1, "procs": 1}),
    "bob": dict(ed="emacs", cc="cc", pager="less", flows={"doc": 4, "browse": 3, "tidy": 2, "social": 2}),
    "carol": dict(ed="vi", cc="cc", pager="less", flows={"edit": 3, "tidy": 3, "search": 3, "procs": 2}),
    "dave": dict(ed="emacs", cc="gcc", pager="more", flows={"browse": 4, "doc": 2, "social": 3, "edit": 2}),
}

WORDS = dict(
    src=["main.c", "util.c", "parse.c", "list.c"],
    txt=["notes", "README", "data.txt", "todo", "results"],
    dir=["src", "doc", "tmp", "old", ".."],
    word=["error", "main", "todo", "static"],
    user=["alice", "bob", "root"],
)


def command_lines(rng, prefs):
    names, weights = zip(*prefs["flows"].items())
    while True:
        for template, p in FLOWS[rng.choices(names, weights)[0]]:
            if rng.random() < p:
                fill = {k: rng.choice(v) for k, v in WORDS.items()}
                fill.update(ed=prefs["ed"], cc=prefs["cc"], pager=prefs["pager"])
                yield template.format(**fill)


def trace(rng, prefs, n_lines):
    out = ["S session 1", "A ll=ls -l"]
    session = 1
    commands = command_lines(rng, prefs)
    while len(out) < n_lines - 1:
        r = rng.random()
        if r < 0.03:
            session += 1
            out.append(f"S session {session}")
        elif r < 0.07:
            out.append("C ll")
        else:
            out.append("C " + next(commands))
            if rng.random() < 0.04 and len(out) < n_lines - 2:
                out.append("E command not found")
    out.append("C logout")
    return out[:n_lines]


def main():
    rng = random.Random(7)
    traces = HERE / "traces"
    man = HERE / "man"
    traces.mkdir(exist_ok=True)
    man.mkdir(exist_ok=True)
    for user, prefs in USERS.items():
        lines = trace(rng, prefs, 250)
        (traces / f"{user}.txt").write_text("\n".join(lines) + "\n")
    for name, text in MAN.items():
        (man / f"{name}.txt").write_text(f"{name} - {text}\n")


if __name__ == "__main__":
    main()
