from artcombine.main import run

run()
