namespace takevla {}
